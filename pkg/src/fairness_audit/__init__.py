"""Causal group-fairness audits of tabular data.

Population-level effects of a binary protected attribute are estimated by
inverse-probability weighting; effects on the protected group by matching,
with balance diagnostics and hidden-bias sensitivity bounds.
"""

__version__ = "0.1.0"

from .balance import BalanceReport, balance_report, jitter_data, qq_data, render_svg, standardized_mean_difference
from .dataset import ColumnSchema, Dataset, from_arrays, load_dataset, load_schema, prepare
from .face import estimate_face, interpret_face
from .fact import estimate_fact, interpret_fact
from .glm import EffectEstimate, FittedGlm, fit_linear_weighted, fit_logistic_weighted, wald_test
from .matching import MatchConfig, MatchResult, match
from .propensity import PropensityResult, fit_propensity
from .sensitivity import SensitivityReport, critical_gamma, rosenbaum_bounds
from .synthgen import SynthConfig, generate

__all__ = [
    "BalanceReport", "ColumnSchema", "Dataset", "EffectEstimate", "FittedGlm", "MatchConfig",
    "MatchResult", "PropensityResult", "SensitivityReport", "SynthConfig", "balance_report",
    "critical_gamma", "estimate_face", "estimate_fact", "fit_linear_weighted",
    "fit_logistic_weighted", "fit_propensity", "from_arrays", "generate", "interpret_face",
    "interpret_fact", "jitter_data", "load_dataset", "load_schema", "match", "prepare", "qq_data",
    "render_svg", "rosenbaum_bounds", "standardized_mean_difference", "wald_test",
]
