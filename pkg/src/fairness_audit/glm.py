"""Weighted linear and logistic regression with model-based and sandwich covariances."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.special import expit, logit

from .errors import (
    NumericalCovarianceFailure,
    SeparationDetected,
    SeparationWarning,
    SingularDesign,
)

RANK_TOL = 1e-10
IRLS_TOL = 1e-10
IRLS_MAX_ITER = 100
IRLS_GRAD_TOL = 1e-9
SEPARATION_BOUND = 1e3
REFINEMENT_STEPS = 2


@dataclass(frozen=True)
class FittedGlm:
    family: str
    coefficients: np.ndarray
    covariance_model: np.ndarray
    covariance_sandwich: np.ndarray
    n_obs: int
    converged: bool
    iterations: int
    weights_used: np.ndarray
    fitted: np.ndarray
    deviance: float
    covariance_hc3: np.ndarray | None = None
    covariance_cluster: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def covariance(self, kind: str = "sandwich") -> np.ndarray:
        """Covariance by kind: ``model``, ``sandwich`` (HC0), ``hc3`` or ``cluster``."""
        if kind == "model":
            return self.covariance_model
        if kind == "sandwich":
            return self.covariance_sandwich
        if kind == "hc3":
            return self.covariance_hc3
        if kind == "cluster":
            if self.covariance_cluster is None:
                raise ValueError("fit was run without cluster labels")
            return self.covariance_cluster
        raise ValueError(f"unknown covariance kind {kind!r}")


@dataclass(frozen=True)
class EffectEstimate:
    estimate: float
    std_error: float
    z_value: float
    p_value: float
    alpha: float
    significant: bool
    scale: str

    def confidence_interval(self, level: float | None = None) -> tuple[float, float]:
        level = 1 - self.alpha if level is None else level
        q = stats.norm.ppf(0.5 + level / 2)
        return self.estimate - q * self.std_error, self.estimate + q * self.std_error

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "z_value": self.z_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "significant": self.significant,
            "scale": self.scale,
        }


def _check_inputs(design, y, w):
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise ValueError("design must be a 2-d matrix")
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if len(y) != X.shape[0] or len(w) != X.shape[0]:
        raise ValueError("design, y and w must have the same number of rows")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    return X, y, w


class _WeightedQR:
    """Pivoted QR of diag(sqrt(w)) X, with rank check and refined solves."""

    def __init__(self, X, w):
        self.X = X
        self.sw = np.sqrt(w)
        Xw = X * self.sw[:, None]
        Q, R, P = linalg.qr(Xw, mode="economic", pivoting=True)
        p = X.shape[1]
        diag = np.abs(np.diag(R))
        if p and (diag[0] == 0 or np.any(diag < RANK_TOL * diag[0])):
            k = int(np.argmax(diag < RANK_TOL * diag[0])) if diag[0] > 0 else 0
            raise SingularDesign(sorted(P[k:]))
        self.Xw, self.Q, self.R, self.P = Xw, Q, R, P

    def solve(self, y) -> np.ndarray:
        return self.solve_with_residuals(y)[0]

    def solve_with_residuals(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients and scaled residuals ``sqrt(w) * (y - X b)``.

        Residuals of the refinement loop are accumulated in extended
        precision so the returned solution is accurate to well below the
        rounding noise of the data themselves.
        """
        yw = y * self.sw
        ywl = yw.astype(np.longdouble)
        Xwl = self.Xw.astype(np.longdouble)
        b = self._solve_scaled(yw).astype(np.longdouble)
        for _ in range(REFINEMENT_STEPS):
            r = ywl - Xwl @ b
            b = b + self._solve_scaled(r.astype(float))
        r = ywl - Xwl @ b
        return b.astype(float), r.astype(float)

    def _solve_scaled(self, rhs):
        bp = linalg.solve_triangular(self.R, self.Q.T @ rhs)
        b = np.empty_like(bp)
        b[self.P] = bp
        return b

    def bread(self) -> np.ndarray:
        """(X' W X)^{-1}."""
        p = self.R.shape[1]
        Rinv = linalg.solve_triangular(self.R, np.eye(p))
        inner = Rinv @ Rinv.T
        out = np.empty_like(inner)
        out[np.ix_(self.P, self.P)] = inner
        return (out + out.T) / 2

    def leverage(self) -> np.ndarray:
        h = np.sum((self.Q * self.Q), axis=1)
        return np.minimum(h, 1.0)


def _jackknife_resid(score_resid, h):
    # HC3 inflation; rows with leverage 1 have zero residual anyway
    safe = np.where(h < 1.0, 1.0 - h, 1.0)
    return score_resid / safe


def _sandwich(bread, X, score_resid):
    scores = X * score_resid[:, None]
    meat = scores.T @ scores
    v = bread @ meat @ bread
    return (v + v.T) / 2


def _cluster_sandwich(bread, X, score_resid, clusters):
    clusters = np.asarray(clusters)
    labels, inv = np.unique(clusters, return_inverse=True)
    scores = X * score_resid[:, None]
    summed = np.zeros((len(labels), X.shape[1]))
    np.add.at(summed, inv, scores)
    v = bread @ (summed.T @ summed) @ bread
    return (v + v.T) / 2


def fit_linear_weighted(design, y, w=None, *, clusters=None, names=None) -> FittedGlm:
    """Weighted least squares.

    Minimizes ``sum_i w_i (y_i - x_i' b)^2``. The sandwich covariance is the
    HC0 form ``B (sum_i w_i^2 e_i^2 x_i x_i') B`` with ``B = (X'WX)^{-1}``;
    the HC3 variant divides each residual by ``1 - h_i`` (``h_i`` the
    weighted leverage). The model covariance is ``sigma^2 B`` with sigma^2
    estimated on the rows carrying positive weight.

    Raises
    ------
    SingularDesign
        If the weighted design is rank deficient.
    """
    X, y, w = _check_inputs(design, y, w)
    qr = _WeightedQR(X, w)
    b, scaled_resid = qr.solve_with_residuals(y)
    # w_i * e_i, taken from the extended-precision residuals
    wresid = qr.sw * scaled_resid
    bread = qr.bread()
    n_obs = int(np.count_nonzero(w))
    dof = n_obs - X.shape[1]
    rss = float(np.sum(scaled_resid**2))
    if dof > 0:
        cov_model = rss / dof * bread
    else:
        cov_model = np.full_like(bread, np.nan)
    cov_sw = _sandwich(bread, X, wresid)
    cov_hc3 = _sandwich(bread, X, _jackknife_resid(wresid, qr.leverage()))
    cov_cl = None if clusters is None else _cluster_sandwich(bread, X, wresid, clusters)
    return FittedGlm(
        family="linear",
        coefficients=b,
        covariance_model=cov_model,
        covariance_sandwich=cov_sw,
        n_obs=n_obs,
        converged=True,
        iterations=1,
        weights_used=w,
        fitted=X @ b,
        deviance=rss,
        covariance_hc3=cov_hc3,
        covariance_cluster=cov_cl,
        names=None if names is None else tuple(names),
    )


def _bernoulli_parts(eta, y):
    # Numerically stable mean, variance and residual for the logit link.
    mu = expit(eta)
    one_minus = expit(-eta)
    var = mu * one_minus
    resid = y * one_minus - (1 - y) * mu
    return mu, var, resid


def _deviance(eta, y, w):
    # -2 * sum w [y log mu + (1-y) log(1-mu)], written with log-sum-exp.
    return float(2 * np.sum(w * (np.logaddexp(0, eta) - y * eta)))


def log_likelihood(beta, design, y, w=None) -> float:
    X, y, w = _check_inputs(design, y, w)
    return -0.5 * _deviance(X @ np.asarray(beta, dtype=float), y, w)


def score(beta, design, y, w=None) -> np.ndarray:
    """Gradient of the weighted Bernoulli log-likelihood."""
    X, y, w = _check_inputs(design, y, w)
    _, _, resid = _bernoulli_parts(X @ np.asarray(beta, dtype=float), y)
    return X.T @ (w * resid)


def irls_working(eta, y, w):
    """Working response and working weights of one IRLS step at linear predictor ``eta``."""
    _, var, resid = _bernoulli_parts(eta, y)
    return eta + resid / var, w * var


def irls_step(design, y, w, eta) -> np.ndarray:
    """One IRLS update: the weighted least-squares fit of the working response."""
    X, y, w = _check_inputs(design, y, w)
    z, ww = irls_working(np.asarray(eta, dtype=float), y, w)
    return _WeightedQR(X, ww).solve(z)


def fit_logistic_weighted(
    design,
    y,
    w=None,
    *,
    clusters=None,
    names=None,
    max_iter: int = IRLS_MAX_ITER,
    tol: float = IRLS_TOL,
) -> FittedGlm:
    """Weighted logistic regression by iteratively reweighted least squares.

    Iteration stops once ``|dev - dev_old| / (|dev| + 0.1) < tol`` and the
    score max-norm is below ``IRLS_GRAD_TOL`` (or has stopped shrinking, which
    marks the roundoff floor). After ``max_iter`` steps ``converged`` is False.

    Raises
    ------
    SeparationDetected
        When the coefficient max-norm exceeds 1e3 during iteration, or when
        the converged fit predicts every weighted row perfectly.
    SingularDesign
        If the weighted design is rank deficient.
    """
    X, y, w = _check_inputs(design, y, w)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic outcome must be coded 0/1")
    pos = w > 0
    if not (np.any(y[pos] == 1) and np.any(y[pos] == 0)):
        raise ValueError("both outcome classes need positive total weight")

    # rank check on the unmodified weights first, so collinearity is reported as such
    _WeightedQR(X, w)

    eta = logit((y + 0.5) / 2)
    dev_old = _deviance(eta, y, w)
    beta = np.zeros(X.shape[1])
    converged = False
    grad_old = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        z, ww = irls_working(eta, y, w)
        try:
            beta_new = _WeightedQR(X, ww).solve(z)
        except SingularDesign as exc:
            raise SeparationDetected(
                "working weights collapsed during IRLS; fitted probabilities reached 0 or 1"
            ) from exc
        if np.max(np.abs(beta_new)) > SEPARATION_BOUND:
            raise SeparationDetected(
                f"coefficient max-norm {np.max(np.abs(beta_new)):.3g} exceeds {SEPARATION_BOUND:g}"
            )
        eta_new = X @ beta_new
        dev = _deviance(eta_new, y, w)
        halvings = 0
        while not np.isfinite(dev) and halvings < 30:
            beta_new = (beta_new + beta) / 2
            eta_new = X @ beta_new
            dev = _deviance(eta_new, y, w)
            halvings += 1
        beta, eta = beta_new, eta_new
        grad = np.max(np.abs(X.T @ (w * _bernoulli_parts(eta, y)[2])))
        if abs(dev - dev_old) / (abs(dev) + 0.1) < tol and (grad < IRLS_GRAD_TOL or grad >= grad_old):
            converged = True
            break
        dev_old, grad_old = dev, grad

    mu, var, resid = _bernoulli_parts(eta, y)
    if converged and np.all(np.abs(y[pos] - mu[pos]) < 1e-8):
        raise SeparationDetected("outcome is perfectly predicted (complete separation)")
    if np.any((var[pos] < 1e-14)):
        warnings.warn("fitted probabilities numerically 0 or 1 occurred", SeparationWarning,
                      stacklevel=2)
    try:
        info = _WeightedQR(X, w * var)
    except SingularDesign as exc:
        raise SeparationDetected("information matrix is singular at the fitted values") from exc
    bread = info.bread()
    cov_sw = _sandwich(bread, X, w * resid)
    cov_hc3 = _sandwich(bread, X, _jackknife_resid(w * resid, info.leverage()))
    cov_cl = None if clusters is None else _cluster_sandwich(bread, X, w * resid, clusters)
    return FittedGlm(
        family="logistic",
        coefficients=beta,
        covariance_model=bread,
        covariance_sandwich=cov_sw,
        n_obs=int(np.count_nonzero(w)),
        converged=converged,
        iterations=it,
        weights_used=w,
        fitted=mu,
        deviance=_deviance(eta, y, w),
        covariance_hc3=cov_hc3,
        covariance_cluster=cov_cl,
        names=None if names is None else tuple(names),
    )


def wald_test(fit: FittedGlm, coef_index: int, alpha: float = 0.05,
              covariance: str = "sandwich") -> EffectEstimate:
    """Two-sided Wald z-test of a single coefficient."""
    if not 0 <= coef_index < len(fit.coefficients):
        raise IndexError(f"coefficient index {coef_index} out of range")
    var = float(fit.covariance(covariance)[coef_index, coef_index])
    if not np.isfinite(var) or var <= 0:
        raise NumericalCovarianceFailure(
            f"{covariance} variance of coefficient {coef_index} is {var!r}"
        )
    est = float(fit.coefficients[coef_index])
    return effect_from(est, float(np.sqrt(var)), alpha,
                       "difference" if fit.family == "linear" else "log-odds-ratio")


def effect_from(estimate: float, std_error: float, alpha: float, scale: str) -> EffectEstimate:
    z = estimate / std_error
    p = float(min(1.0, 2 * stats.norm.sf(abs(z))))
    return EffectEstimate(
        estimate=estimate,
        std_error=std_error,
        z_value=z,
        p_value=p,
        alpha=alpha,
        significant=bool(p < alpha),
        scale=scale,
    )
