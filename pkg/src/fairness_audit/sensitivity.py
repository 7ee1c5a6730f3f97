"""Sensitivity of the matched-pairs test to hidden bias.

For a hidden-bias odds ratio ``gamma`` the probability that a pair's
difference favors the treated row is bounded by ``1 / (1 + gamma)`` and
``gamma / (1 + gamma)``. Evaluating the test statistic's null distribution at
the two extremes gives lower and upper bounds on the p-value.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, norm, rankdata

from .errors import NoInformativePairs
from .matching import MatchResult

BEYOND_GRID = "beyond grid"
ALTERNATIVES = ("greater", "less")
# the exact signed-rank distribution costs O(k^3); beyond this use the normal approximation
EXACT_MAX_PAIRS = 400


def gamma_grid(gamma_max: float = 10.0, step: float = 0.5, start: float = 1.0) -> np.ndarray:
    """Evenly spaced grid ``start, start + step, ..., gamma_max``."""
    if start < 1 or step <= 0 or gamma_max < start:
        raise ValueError("need 1 <= start <= gamma_max and step > 0")
    k = int(np.floor((gamma_max - start) / step + 1e-9))
    return np.round(start + step * np.arange(k + 1), 10)


DEFAULT_GRID = gamma_grid()


@dataclass(frozen=True)
class SensitivityReport:
    gammas: np.ndarray
    p_upper: np.ndarray
    p_lower: np.ndarray
    test_kind: str
    alternative: str
    statistic: float
    n_pairs: int
    n_informative: int
    method: str = "normal"

    def critical_gamma(self, alpha: float = 0.05):
        return critical_gamma(self, alpha)

    def to_dict(self, alpha: float = 0.05) -> dict:
        return {
            "test_kind": self.test_kind,
            "alternative": self.alternative,
            "method": self.method,
            "statistic": float(self.statistic),
            "n_pairs": self.n_pairs,
            "n_informative": self.n_informative,
            "alpha": alpha,
            "critical_gamma": critical_gamma(self, alpha),
            "gammas": [float(g) for g in self.gammas],
            "p_upper": [float(v) for v in self.p_upper],
            "p_lower": [float(v) for v in self.p_lower],
        }


def critical_gamma(r: SensitivityReport, alpha: float = 0.05):
    """Smallest grid gamma whose upper p-value bound exceeds ``alpha``."""
    above = np.flatnonzero(np.asarray(r.p_upper) > alpha)
    return float(r.gammas[above[0]]) if len(above) else BEYOND_GRID


def _signed_rank_exact_sf(ranks2: np.ndarray, t2: int, prob: float) -> float:
    """P(sum of included ranks >= t2) with each rank included independently with ``prob``.

    Ranks are doubled so midranks are integers.
    """
    dist = np.zeros(int(ranks2.sum()) + 1)
    dist[0] = 1.0
    top = 0
    for r in ranks2:
        r = int(r)
        new = dist.copy()
        new[: top + 1] *= 1.0 - prob
        new[r: r + top + 1] += prob * dist[: top + 1]
        dist = new
        top += r
    return float(dist[t2:].sum())


def _signed_rank_bounds(diff, gammas, alternative, method, correction):
    d = np.asarray(diff, dtype=float)
    d = d[d != 0]
    if len(d) == 0:
        raise NoInformativePairs("all pair differences are zero")
    if method == "exact" and len(d) > EXACT_MAX_PAIRS:
        raise ValueError(f"exact bounds limited to {EXACT_MAX_PAIRS} informative pairs, got {len(d)}")
    ranks = rankdata(np.abs(d))
    # count ranks on the side named by the alternative; "less" is the mirror image
    side = d > 0 if alternative == "greater" else d < 0
    stat = float(ranks[side].sum())
    total, sumsq = ranks.sum(), (ranks ** 2).sum()
    upper, lower = [], []
    for g in gammas:
        p_hi = g / (1.0 + g)
        bounds = []
        for p in (p_hi, 1.0 - p_hi):
            if method == "exact":
                ranks2 = np.rint(2 * ranks).astype(int)
                bounds.append(_signed_rank_exact_sf(ranks2, int(round(2 * stat)), p))
            else:
                cc = 0.5 if correction else 0.0
                z = (stat - p * total - cc) / np.sqrt(p * (1.0 - p) * sumsq)
                bounds.append(float(norm.sf(z)))
        upper.append(bounds[0])
        lower.append(bounds[1])
    return stat, len(d), np.array(upper), np.array(lower)


def _discordant_bounds(yt, yc, gammas, alternative):
    yt, yc = np.asarray(yt, float), np.asarray(yc, float)
    disc = yt != yc
    D = int(disc.sum())
    if D == 0:
        raise NoInformativePairs("no discordant pairs")
    favor = int(np.count_nonzero(yt[disc] > yc[disc]))
    stat = favor if alternative == "greater" else D - favor
    upper, lower = [], []
    for g in gammas:
        p_hi = g / (1.0 + g)
        upper.append(float(binom.sf(stat - 1, D, p_hi)))
        lower.append(float(binom.sf(stat - 1, D, 1.0 - p_hi)))
    return stat, D, np.array(upper), np.array(lower)


def rosenbaum_bounds(
    pairs,
    gammas=DEFAULT_GRID,
    outcome_kind: str = "numeric",
    alternative: str = "greater",
    method: str = "normal",
    correction: bool = True,
) -> SensitivityReport:
    """Upper and lower p-value bounds of the matched-pairs test over a gamma grid.

    Parameters
    ----------
    pairs : array_like, shape (k, 2)
        ``(treated_outcome, control_outcome)`` per pair.
    gammas : array_like
        Increasing grid of hidden-bias odds ratios, all >= 1.
    outcome_kind : {"numeric", "binary"}
        Numeric outcomes use the Wilcoxon signed-rank statistic (midranks,
        zero differences dropped); binary outcomes use the count of
        treated-favoring discordant pairs against a binomial.
    alternative : {"greater", "less"}
        Direction of the effect being tested.
    method : {"normal", "exact"}
        Signed-rank tail from the normal approximation or from the exact
        distribution. Binary bounds are always exact.
    correction : bool
        Half-unit continuity correction for the normal approximation.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    if method not in ("normal", "exact"):
        raise ValueError("method must be 'normal' or 'exact'")
    g = np.asarray(gammas, dtype=float)
    if len(g) == 0 or g.min() < 1 or np.any(np.diff(g) <= 0):
        raise ValueError("gammas must be an increasing grid of values >= 1")
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if outcome_kind == "binary":
        stat, k, up, lo = _discordant_bounds(arr[:, 0], arr[:, 1], g, alternative)
        kind, method = "binary_discordant", "exact"
    else:
        stat, k, up, lo = _signed_rank_bounds(arr[:, 0] - arr[:, 1], g, alternative, method, correction)
        kind = "signed_rank"
    return SensitivityReport(
        gammas=g, p_upper=np.clip(up, 0.0, 1.0), p_lower=np.clip(lo, 0.0, 1.0),
        test_kind=kind, alternative=alternative, statistic=float(stat),
        n_pairs=len(arr), n_informative=k, method=method,
    )


def reduce_to_pairs(m: MatchResult) -> list[tuple[int, int, float]]:
    """One-to-one pairs ``(treated, control, distance)`` from any match structure.

    Each matched treated row proposes its nearest matched control (all
    controls at that distance on ties). Proposals are accepted greedily by
    increasing ``(distance, treated, control)`` while both rows are unused.
    Exact-match subclasses have distance 0 throughout.
    """
    links = defaultdict(list)
    if m.pairs:
        for t, c, d in m.pairs:
            links[int(t)].append((float(d), int(c)))
    else:
        for members in m.subclasses:
            idx = np.asarray(members)
            cs = idx[m.treated[idx] == 0]
            for t in idx[m.treated[idx] == 1]:
                links[int(t)].extend((0.0, int(c)) for c in cs)
    proposals = []
    for t, cand in links.items():
        best = min(d for d, _ in cand)
        proposals.extend((d, t, c) for d, c in cand if d == best)
    proposals.sort()
    used_t, used_c, out = set(), set(), []
    for d, t, c in proposals:
        if t in used_t or c in used_c:
            continue
        used_t.add(t)
        used_c.add(c)
        out.append((t, c, d))
    out.sort()
    return out


def pairs_from_match(m: MatchResult, outcome) -> np.ndarray:
    """Outcome pairs ``(treated, control)`` after reducing ``m`` to one-to-one pairs."""
    y = np.asarray(outcome, dtype=float)
    red = reduce_to_pairs(m)
    return np.array([(y[t], y[c]) for t, c, _ in red], dtype=float).reshape(-1, 2)


def sensitivity_for_match(m: MatchResult, outcome, outcome_kind: str, estimate: float,
                          gammas=DEFAULT_GRID, method: str = "normal") -> SensitivityReport:
    """Bounds for the match, testing in the direction of the estimated effect."""
    alternative = "greater" if estimate >= 0 else "less"
    return rosenbaum_bounds(pairs_from_match(m, outcome), gammas, outcome_kind, alternative, method)
