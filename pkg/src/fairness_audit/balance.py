"""Descriptive match-quality diagnostics and their SVG rendering.

Only descriptive statistics are reported: standardized mean differences,
weighted quantile pairs and jitter-plot coordinates. No balance hypothesis
tests are run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from xml.sax.saxutils import escape

from .dataset import Dataset
from .errors import WriteError, ZeroVarianceFeature
from .matching import MatchResult
from .propensity import PropensityResult

LANES = ("unmatched treated", "matched treated", "matched control", "unmatched control")
JITTER_WIDTH = 0.3
MAX_RADIUS = 6.0


def standardized_mean_difference(values, group, weights=None) -> float:
    """Absolute weighted mean difference over the pooled unweighted group SD.

    Parameters
    ----------
    values : array_like
        Feature or score for every row.
    group : array_like
        1 for treated rows, 0 for controls.
    weights : array_like, optional
        Row weights for the means (default all ones). The denominator always
        uses the unweighted variances of all rows in each group, so before
        and after values share one scale.

    Returns
    -------
    float
        ``|mean_t - mean_c| / sqrt((s_t**2 + s_c**2) / 2)``.
    """
    x = np.asarray(values, dtype=float)
    g = np.asarray(group)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    t, c = g == 1, g == 0
    if w[t].sum() <= 0 or w[c].sum() <= 0:
        raise ValueError("both groups need positive total weight")
    s2 = (np.var(x[t], ddof=1) if t.sum() > 1 else 0.0) + (np.var(x[c], ddof=1) if c.sum() > 1 else 0.0)
    if not s2 > 0:
        raise ZeroVarianceFeature("pooled group variance is zero")
    diff = np.average(x[t], weights=w[t]) - np.average(x[c], weights=w[c])
    return float(abs(diff) / np.sqrt(s2 / 2.0))


@dataclass(frozen=True)
class BalanceReport:
    """Balance on the distance measure before and after matching.

    The per-feature SMDs are a supplementary diagnostic; the headline figures
    are ``d_bar_before`` and ``d_bar_after`` on the linear propensity score.
    """

    d_bar_before: float
    d_bar_after: float
    per_feature_smd_before: dict = field(default_factory=dict)
    per_feature_smd_after: dict = field(default_factory=dict)
    n_matched: dict = field(default_factory=dict)
    skipped_features: tuple = ()

    def to_dict(self) -> dict:
        return {
            "d_bar_before": self.d_bar_before,
            "d_bar_after": self.d_bar_after,
            "n_matched": dict(self.n_matched),
            "per_feature_smd": {
                "note": "supplementary diagnostic; headline balance is d_bar on the linear propensity score",
                "before": dict(self.per_feature_smd_before),
                "after": dict(self.per_feature_smd_after),
                "skipped_zero_variance": list(self.skipped_features),
            },
        }


def balance_report(d: Dataset, p: PropensityResult, m: MatchResult) -> BalanceReport:
    g = p.treated
    w = m.match_weight
    before = standardized_mean_difference(p.linear_score, g)
    after = standardized_mean_difference(p.linear_score, g, w)
    smd_b, smd_a, skipped = {}, {}, []
    x = d.features()
    for j, name in enumerate(d.feature_names):
        try:
            smd_b[name] = standardized_mean_difference(x[:, j], g)
            smd_a[name] = standardized_mean_difference(x[:, j], g, w)
        except ZeroVarianceFeature:
            skipped.append(name)
    return BalanceReport(
        d_bar_before=before,
        d_bar_after=after,
        per_feature_smd_before=smd_b,
        per_feature_smd_after=smd_a,
        n_matched={"treated": m.n_treated_matched, "control": m.n_control_matched},
        skipped_features=tuple(skipped),
    )


def weighted_quantiles(values, weights, levels) -> np.ndarray:
    """Inverse of the weighted ECDF, linear between its jump points.

    Tied values are merged with their weights summed, so replicating every
    row k times leaves the result unchanged.
    """
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    keep = w > 0
    x, w = x[keep], w[keep]
    ux, inv = np.unique(x, return_inverse=True)
    uw = np.bincount(inv, weights=w)
    cdf = np.cumsum(uw) / uw.sum()
    return np.interp(np.asarray(levels, dtype=float), cdf, ux)


@dataclass(frozen=True)
class QQData:
    feature: str
    points: tuple[tuple[float, float], ...]


def qq_data(feature, group, weights=None, n_quantiles: int = 50) -> list[tuple[float, float]]:
    """Pairs ``(treated_quantile, control_quantile)`` at levels ``k / (n_quantiles + 1)``."""
    if n_quantiles < 2:
        raise ValueError("n_quantiles must be at least 2")
    x = np.asarray(feature, dtype=float)
    g = np.asarray(group)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    t, c = (g == 1) & (w > 0), (g == 0) & (w > 0)
    if not t.any() or not c.any():
        return []
    levels = np.arange(1, n_quantiles + 1) / (n_quantiles + 1)
    qt = weighted_quantiles(x[t], w[t], levels)
    qc = weighted_quantiles(x[c], w[c], levels)
    return [(float(a), float(b)) for a, b in zip(qt, qc)]


@dataclass(frozen=True)
class JitterData:
    """Per-row jitter-plot coordinates.

    ``lane`` indexes ``LANES``. Circle area is proportional to the match
    weight, so zero-weight rows have radius 0 and are drawn hollow.
    """

    linear_score: np.ndarray
    lane: np.ndarray
    offset: np.ndarray
    radius: np.ndarray


def jitter_data(p: PropensityResult, m: MatchResult, seed: int = 0) -> JitterData:
    g = p.treated == 1
    w = np.asarray(m.match_weight, dtype=float)
    matched = w > 0
    lane = np.where(g, np.where(matched, 1, 0), np.where(matched, 2, 3))
    rng = np.random.default_rng(seed)
    offset = rng.uniform(-JITTER_WIDTH, JITTER_WIDTH, size=len(w))
    wmax = w.max() if len(w) and w.max() > 0 else 1.0
    radius = MAX_RADIUS * np.sqrt(w / wmax)
    return JitterData(np.asarray(p.linear_score, float), lane, offset, radius)


# SVG rendering

WIDTH, HEIGHT, MARGIN = 400, 400, 50


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _span(lo: float, hi: float) -> tuple[float, float]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        return 0.0, 1.0
    if hi - lo <= 0:
        return lo - 0.5, hi + 0.5
    return lo, hi


def _header(title: str, width=WIDTH, height=HEIGHT) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _axes(xlabel: str, ylabel: str, lo_x, hi_x, lo_y, hi_y, width=WIDTH, height=HEIGHT) -> list[str]:
    x0, y0, x1, y1 = MARGIN, height - MARGIN, width - MARGIN, MARGIN
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:g}" y="{height - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:g}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:g})">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 16}" font-size="10">{_num(lo_x)}</text>',
        f'<text x="{x1}" y="{y0 + 16}" text-anchor="end" font-size="10">{_num(hi_x)}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end" font-size="10">{_num(lo_y)}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 10}" text-anchor="end" font-size="10">{_num(hi_y)}</text>',
    ]


def qq_to_px(v: float, lo: float, hi: float) -> tuple[float, float]:
    """Pixel position of the value ``v`` on the x and y axes of a QQ plot."""
    size_x = WIDTH - 2 * MARGIN
    size_y = HEIGHT - 2 * MARGIN
    frac = (v - lo) / (hi - lo)
    return MARGIN + frac * size_x, HEIGHT - MARGIN - frac * size_y


def _render_qq(q: QQData) -> list[str]:
    pts = np.asarray(q.points, dtype=float).reshape(-1, 2)
    lo, hi = _span(pts.min(), pts.max()) if len(pts) else (0.0, 1.0)
    out = _header(f"QQ plot: {q.feature}")
    out += _axes("treated quantiles", "control quantiles", lo, hi, lo, hi)
    (ax, ay), (bx, by) = qq_to_px(lo, lo, hi), qq_to_px(hi, lo, hi)
    out.append(f'<line x1="{_num(ax)}" y1="{_num(ay)}" x2="{_num(bx)}" y2="{_num(by)}" '
               f'stroke="gray" stroke-dasharray="4 3"/>')
    for qt, qc in pts:
        x, _ = qq_to_px(qt, lo, hi)
        _, y = qq_to_px(qc, lo, hi)
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2.5" fill="black"/>')
    out.append("</svg>")
    return out


def _render_jitter(j: JitterData) -> list[str]:
    width, height = 600, 360
    s = np.asarray(j.linear_score, dtype=float)
    lo, hi = _span(s.min(), s.max()) if len(s) else (0.0, 1.0)
    out = _header("Jitter plot of linear propensity scores", width, height)
    out += _axes("linear propensity score", "", lo, hi, 0, 0, width, height)[:3]
    band = (height - 2 * MARGIN) / len(LANES)
    for k, name in enumerate(LANES):
        out.append(f'<text x="{width - MARGIN}" y="{_num(MARGIN + band * k + 12)}" '
                   f'text-anchor="end" font-size="11">{escape(name)}</text>')
    for i in range(len(s)):
        x = MARGIN + (s[i] - lo) / (hi - lo) * (width - 2 * MARGIN)
        y = MARGIN + band * (j.lane[i] + 0.5 + j.offset[i])
        if j.radius[i] > 0:
            out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(j.radius[i])}" '
                       f'fill="black" fill-opacity="0.5"/>')
        else:
            out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2" fill="none" stroke="black"/>')
    out.append("</svg>")
    return out


def render_svg(plot_data, path) -> Path:
    """Write ``QQData`` or ``JitterData`` as a standalone SVG 1.1 file.

    Output bytes depend only on the input values.
    """
    if isinstance(plot_data, QQData):
        lines = _render_qq(plot_data)
    elif isinstance(plot_data, JitterData):
        lines = _render_jitter(plot_data)
    else:
        raise TypeError(f"cannot render {type(plot_data).__name__}")
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc
    return path
