"""Propensity of treated-level membership and stabilized inverse-probability weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .dataset import Dataset
from .errors import DegenerateDataset, PositivityViolation, SeparationDetected
from .glm import FittedGlm, fit_logistic_weighted

CLAMP = 1e-6


@dataclass(frozen=True)
class PropensityResult:
    probability: np.ndarray
    linear_score: np.ndarray
    stabilized_weight: np.ndarray
    marginal_treated: float
    treated: np.ndarray
    model: FittedGlm | None = None


def stabilized_weights(probability, treated, marginal_treated=None) -> np.ndarray:
    """Marginal over conditional probability of the observed protected level."""
    p = np.asarray(probability, dtype=float)
    a = np.asarray(treated, dtype=float)
    m = float(a.mean()) if marginal_treated is None else marginal_treated
    return np.where(a == 1, m / p, (1 - m) / (1 - p))


def truncate_weights(weights, lower: float = 1.0, upper: float = 99.0) -> np.ndarray:
    """Clip weights to the given percentiles."""
    lo, hi = np.percentile(weights, [lower, upper])
    return np.clip(weights, lo, hi)


def propensity_from_probability(probability, treated, model=None, truncate=None) -> PropensityResult:
    p = np.clip(np.asarray(probability, dtype=float), CLAMP, 1 - CLAMP)
    a = np.asarray(treated, dtype=float)
    m = float(a.mean())
    sw = stabilized_weights(p, a, m)
    if truncate is not None:
        sw = truncate_weights(sw, *truncate)
    return PropensityResult(
        probability=p,
        linear_score=logit(p),
        stabilized_weight=sw,
        marginal_treated=m,
        treated=a,
        model=model,
    )


def propensity_design(d: Dataset) -> tuple[np.ndarray, list[str]]:
    x, names = d.design_features()
    keep = [j for j in range(x.shape[1]) if np.ptp(x[:, j]) > 0]
    return np.column_stack([np.ones(d.n), x[:, keep]]), ["(intercept)"] + [names[j] for j in keep]


def fit_propensity(d: Dataset, truncate: tuple[float, float] | None = None) -> PropensityResult:
    """Logistic regression of the protected indicator on the non-protected features.

    Probabilities are clamped to ``[1e-6, 1 - 1e-6]`` before the weights are
    formed. ``truncate`` optionally clips the weights to a percentile range,
    e.g. ``(1, 99)``.

    Raises
    ------
    PositivityViolation
        If the protected level is perfectly predictable from the features.
    """
    a = d.protected_indicator
    if np.isnan(a).any():
        raise DegenerateDataset("protected column has missing values; run drop_missing first")
    if a.min() == a.max():
        raise DegenerateDataset("both protected levels must be present")
    X, names = propensity_design(d)
    try:
        fit = fit_logistic_weighted(X, a, names=names)
    except SeparationDetected as exc:
        raise PositivityViolation(
            f"protected attribute is deterministically predictable from the features: {exc}"
        ) from exc
    return propensity_from_probability(expit(X @ fit.coefficients), a, model=fit, truncate=truncate)


def positivity_report(p: PropensityResult, epsilon: float = 1e-3) -> list[int]:
    """Indices of rows whose propensity lies outside ``[epsilon, 1 - epsilon]``."""
    prob = p.probability
    return [int(i) for i in np.flatnonzero((prob < epsilon) | (prob > 1 - epsilon))]
