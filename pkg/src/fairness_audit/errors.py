"""Exception and warning types raised across the audit pipeline."""


class AuditError(Exception):
    """Base class for every error raised by the toolkit."""


# dataset

class SchemaMismatch(AuditError):
    pass


class ProtectedNotBinary(AuditError):
    pass


class DegenerateDataset(AuditError):
    pass


class ConstantColumnWarning(UserWarning):
    pass


# glm

class SingularDesign(AuditError):
    def __init__(self, columns, message=None):
        self.columns = tuple(int(c) for c in columns)
        super().__init__(message or f"design is rank deficient; offending columns {list(self.columns)}")


class SeparationDetected(AuditError):
    pass


class NumericalCovarianceFailure(AuditError):
    pass


class SeparationWarning(UserWarning):
    pass


# propensity

class PositivityViolation(AuditError):
    pass


# matching

class NoCommonSupport(AuditError):
    pass


class NoControlsAvailable(AuditError):
    pass


class InternalFlowError(AuditError):
    pass


# balance

class ZeroVarianceFeature(AuditError):
    pass


class WriteError(AuditError):
    pass


# fact / sensitivity

class EmptyMatch(AuditError):
    pass


class NoInformativePairs(AuditError):
    pass


# cli

class FingerprintMismatch(AuditError):
    pass
