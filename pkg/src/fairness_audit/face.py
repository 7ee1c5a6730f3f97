"""FACE: average causal effect of the protected attribute over the whole population.

Estimated with an outcome regression on ``[1, A, X]`` weighted by stabilized
inverse-probability weights (the pseudo-population).
"""

from __future__ import annotations

import logging

import numpy as np

from .dataset import Dataset
from .errors import DegenerateDataset
from .glm import EffectEstimate, FittedGlm, fit_linear_weighted, fit_logistic_weighted, wald_test
from .propensity import PropensityResult

log = logging.getLogger(__name__)


def outcome_design(d: Dataset, weights, covariates: bool = True) -> tuple[np.ndarray, list[str]]:
    """Design ``[1, A, X]`` for the outcome model.

    Feature columns that are constant over the positively weighted rows carry
    no information once the intercept is present and are left out.
    """
    a = d.protected_indicator
    cols = [np.ones(d.n), a]
    names = ["(intercept)", d.protected.name]
    if covariates:
        x, xnames = d.design_features()
        rows = np.asarray(weights) > 0
        for j, name in enumerate(xnames):
            if np.ptp(x[rows, j]) > 0:
                cols.append(x[:, j])
                names.append(name)
            else:
                log.debug("dropping %s: constant on the analysis sample", name)
    return np.column_stack(cols), names


def fit_outcome_model(d: Dataset, weights, covariates: bool = True, clusters=None) -> FittedGlm:
    a = d.protected_indicator
    w = np.asarray(weights, dtype=float)
    pos = w > 0
    if np.isnan(a).any() or a[pos].min() == a[pos].max():
        raise DegenerateDataset("both protected levels need positive weight in the outcome model")
    X, names = outcome_design(d, w, covariates)
    y = d.outcome
    if d.outcome_kind == "binary":
        return fit_logistic_weighted(X, y, w, clusters=clusters, names=names)
    return fit_linear_weighted(X, y, w, clusters=clusters, names=names)


def estimate_face(
    d: Dataset,
    p: PropensityResult,
    alpha: float = 0.05,
    covariance: str = "hc3",
    covariates: bool = True,
) -> EffectEstimate:
    """Coefficient of the protected indicator in the IPW-weighted outcome model.

    Continuous outcomes give an effect on the difference scale, binary
    outcomes a log odds ratio.
    """
    fit = fit_outcome_model(d, p.stabilized_weight, covariates)
    return wald_test(fit, 1, alpha=alpha, covariance=covariance)


def _levels(d: Dataset) -> tuple[str, str]:
    treated = d.protected.treated_level
    others = [v for v in d.frame[d.protected.name].dropna().unique() if v != treated]
    return treated, (others[0] if others else "other")


def interpret_face(e: EffectEstimate, treated_label: str = "treated",
                   control_label: str = "control") -> dict:
    """Plain-language summary of a FACE estimate."""
    out = {
        "estimand": "FACE",
        "scale": e.scale,
        "estimate": e.estimate,
        "p_value": e.p_value,
        "alpha": e.alpha,
        "significant": e.significant,
    }
    if not e.significant:
        out["verdict"] = "fair on average (FACE)"
        out["summary"] = (
            f"No significant average causal effect of the protected attribute at "
            f"alpha={e.alpha:g} (p={e.p_value:.3g}); fair on average (FACE) over the population."
        )
        if e.scale == "log-odds-ratio":
            out["odds_ratio"] = float(np.exp(e.estimate))
        return out
    direction = "higher" if e.estimate > 0 else "lower"
    out["verdict"] = "not fair on average (FACE)"
    if e.scale == "log-odds-ratio":
        ratio = float(np.exp(e.estimate))
        out["odds_ratio"] = ratio
        out["summary"] = (
            f"Over the whole population, the odds of the positive outcome for {treated_label} "
            f"are {ratio:.2f} times those of {control_label} ({direction}); p={e.p_value:.3g}."
        )
    else:
        out["summary"] = (
            f"Over the whole population, the outcome for {treated_label} is {abs(e.estimate):.4g} "
            f"units {direction} than for {control_label}; p={e.p_value:.3g}."
        )
    return out


def interpret_face_for(d: Dataset, e: EffectEstimate) -> dict:
    treated, control = _levels(d)
    return interpret_face(e, f"{d.protected.name}={treated}", f"{d.protected.name}={control}")
