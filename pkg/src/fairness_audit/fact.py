"""FACT: average causal effect of the protected attribute on the treated group.

The outcome regression on ``[1, A, X]`` is refit on the matched sample with
match weights. Keeping the covariates makes the estimate consistent when
either the matching or the outcome model is right.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .errors import EmptyMatch
from .face import _levels, fit_outcome_model
from .glm import EffectEstimate, wald_test
from .matching import MatchResult


def estimate_fact(
    d: Dataset,
    m: MatchResult,
    alpha: float = 0.05,
    covariance: str = "hc3",
    covariates: bool = True,
    cluster: bool = False,
) -> EffectEstimate:
    """Coefficient of the protected indicator in the match-weighted outcome model.

    Parameters
    ----------
    cluster : bool
        Use a subclass-clustered sandwich. Only available for subclass
        structures (full and exact matching).
    """
    if m.n_treated_matched == 0 or m.n_control_matched == 0:
        raise EmptyMatch(
            f"matched sample has {m.n_treated_matched} treated and {m.n_control_matched} control rows"
        )
    clusters = None
    if cluster:
        if not m.subclasses:
            raise ValueError("clustered variance needs a subclass match (full or exact)")
        clusters = m.subclass_labels()
        covariance = "cluster"
    fit = fit_outcome_model(d, m.match_weight, covariates, clusters=clusters)
    return wald_test(fit, 1, alpha=alpha, covariance=covariance)


def interpret_fact(e: EffectEstimate, m: MatchResult, treated_label: str = "treated",
                   control_label: str = "control") -> dict:
    """Plain-language summary of a FACT estimate, restricted to the treated group."""
    out = {
        "estimand": "FACT",
        "scale": e.scale,
        "estimate": e.estimate,
        "p_value": e.p_value,
        "alpha": e.alpha,
        "significant": e.significant,
        "method": m.config.method,
        "n_treated_matched": m.n_treated_matched,
        "n_control_matched": m.n_control_matched,
    }
    if e.scale == "log-odds-ratio":
        out["odds_ratio"] = float(np.exp(e.estimate))
    counts = f"{m.n_treated_matched} treated and {m.n_control_matched} control rows matched by {m.config.method}"
    if not e.significant:
        out["verdict"] = "fair on average causal effect on the treated"
        out["summary"] = (
            f"No significant effect of the protected attribute on {treated_label} at "
            f"alpha={e.alpha:g} (p={e.p_value:.3g}); {counts}."
        )
        return out
    direction = "higher" if e.estimate > 0 else "lower"
    out["verdict"] = "not fair on average causal effect on the treated"
    if e.scale == "log-odds-ratio":
        out["summary"] = (
            f"Among {treated_label} and comparable {control_label}, the odds of the positive outcome "
            f"for {treated_label} are {out['odds_ratio']:.2f} times those of {control_label} "
            f"({direction}); p={e.p_value:.3g}; {counts}."
        )
    else:
        out["summary"] = (
            f"Among {treated_label} and comparable {control_label}, the outcome for {treated_label} "
            f"is {abs(e.estimate):.4g} units {direction}; p={e.p_value:.3g}; {counts}."
        )
    return out


def interpret_fact_for(d: Dataset, e: EffectEstimate, m: MatchResult) -> dict:
    treated, control = _levels(d)
    return interpret_fact(e, m, f"{d.protected.name}={treated}", f"{d.protected.name}={control}")
