"""Matched samples of treated and control rows.

Five methods are available: exact matching on the features, nearest-neighbor
matching on the linear propensity score (with or without a caliper),
Mahalanobis matching within a propensity caliper, and optimal full matching.
Propensity distances are always taken on the linear (logit) scale.
"""

from __future__ import annotations

import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .dataset import Dataset
from .errors import InternalFlowError, NoCommonSupport, NoControlsAvailable
from .flow import MinCostFlow
from .propensity import PropensityResult

METHODS = ("exact", "nn", "nn_caliper", "mahalanobis_caliper", "full")
PAIR_METHODS = ("nn", "nn_caliper", "mahalanobis_caliper")
COST_RESOLUTION = 1e-6
RIDGE = 1e-8


def worker_count() -> int:
    """Worker cap from ``FAIRNESS_AUDIT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FAIRNESS_AUDIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MatchConfig:
    method: str = "full"
    caliper_sd: float = 0.25
    with_replacement: bool = True
    discard: str = "common_support"
    tie_break: str = "lowest_index"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown matching method {self.method!r}")
        if self.method in ("nn_caliper", "mahalanobis_caliper") and not self.caliper_sd > 0:
            raise ValueError("caliper_sd must be positive for caliper methods")
        if self.discard not in ("none", "common_support"):
            raise ValueError(f"unknown discard rule {self.discard!r}")
        if self.tie_break != "lowest_index":
            raise ValueError("only lowest_index tie-breaking is supported")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of a matching run.

    ``pairs`` lists ``(treated, control, distance)``. For full and exact
    matching the grouping lives in ``subclasses`` (each a sorted tuple of
    row indices); full matching also lists its within-subclass
    treated-control links in ``pairs``.
    """

    config: MatchConfig
    treated: np.ndarray
    pairs: tuple[tuple[int, int, float], ...] = ()
    subclasses: tuple[tuple[int, ...], ...] = ()
    match_weight: np.ndarray = field(default=None, repr=False)
    discarded: np.ndarray = field(default=None, repr=False)
    caliper: float | None = None

    @property
    def matched(self) -> np.ndarray:
        return self.match_weight > 0

    @property
    def n_treated_matched(self) -> int:
        return int(np.count_nonzero(self.matched & (self.treated == 1)))

    @property
    def n_control_matched(self) -> int:
        return int(np.count_nonzero(self.matched & (self.treated == 0)))

    @property
    def total_distance(self) -> float:
        return float(sum(d for _, _, d in self.pairs))

    def subclass_labels(self) -> np.ndarray:
        """Per-row subclass id (-1 outside any subclass)."""
        lab = np.full(len(self.treated), -1)
        for k, members in enumerate(self.subclasses):
            lab[list(members)] = k
        return lab

    def to_dict(self) -> dict:
        return {
            "method": self.config.method,
            "caliper_sd": self.config.caliper_sd,
            "caliper": self.caliper,
            "with_replacement": self.config.with_replacement,
            "discard": self.config.discard,
            "n_treated_matched": self.n_treated_matched,
            "n_control_matched": self.n_control_matched,
            "pairs": [[int(t), int(c), float(dist)] for t, c, dist in self.pairs],
            "subclasses": [[int(i) for i in s] for s in self.subclasses],
            "match_weight": [float(w) for w in self.match_weight],
            "discarded": [bool(x) for x in self.discarded],
        }


def common_support_filter(p: PropensityResult) -> np.ndarray:
    """Flag rows whose linear score lies outside the overlap of the two groups' ranges."""
    s = p.linear_score
    t = p.treated == 1
    lo = max(s[t].min(), s[~t].min())
    hi = min(s[t].max(), s[~t].max())
    if lo > hi:
        raise NoCommonSupport(f"treated and control score ranges do not overlap ({lo:.4g} > {hi:.4g})")
    return (s < lo) | (s > hi)


def compute_match_weights(m: MatchResult) -> np.ndarray:
    """Treated rows get 1; control weights are normalized to sum to the matched-control count.

    Pair methods weight a control by the number of times it is used; subclass
    methods by treated/control counts of its subclass. Unmatched rows get 0.
    """
    n = len(m.treated)
    w = np.zeros(n)
    if m.subclasses:
        for members in m.subclasses:
            idx = np.asarray(members)
            t = idx[m.treated[idx] == 1]
            c = idx[m.treated[idx] == 0]
            w[t] = 1.0
            w[c] = len(t) / len(c)
    else:
        for t, c, _ in m.pairs:
            w[t] = 1.0
            w[c] += 1.0
    controls = (m.treated == 0) & (w > 0)
    total = w[controls].sum()
    if total > 0:
        w[controls] *= np.count_nonzero(controls) / total
    return w


def _finish(m: MatchResult) -> MatchResult:
    w = compute_match_weights(m)
    discarded = m.discarded if m.discarded is not None else np.zeros(len(m.treated), bool)
    return replace(m, match_weight=w, discarded=discarded)


def _retained(p: PropensityResult, cfg: MatchConfig) -> np.ndarray:
    if cfg.discard == "common_support":
        return ~common_support_filter(p)
    return np.ones(len(p.treated), bool)


def pooled_sd(values) -> float:
    return float(np.std(values, ddof=1))


def exact_match(d: Dataset, cfg: MatchConfig | None = None) -> MatchResult:
    """Match treated and control rows that agree on every feature column."""
    cfg = cfg or MatchConfig(method="exact", discard="none")
    a = d.protected_indicator
    x = np.ascontiguousarray(d.features())
    cells: dict[bytes, list[int]] = defaultdict(list)
    for i in range(d.n):
        cells[x[i].tobytes()].append(i)
    subclasses = []
    matched = np.zeros(d.n, bool)
    for members in cells.values():
        groups = a[members]
        if (groups == 1).any() and (groups == 0).any():
            subclasses.append(tuple(members))
            matched[members] = True
    subclasses.sort()
    return _finish(MatchResult(
        config=cfg, treated=a, subclasses=tuple(subclasses), discarded=~matched,
    ))


def _nearest_sorted(values_sorted, index_sorted, targets):
    """Nearest sorted value to each target; ties go to the lowest original index."""
    m = len(values_sorted)
    pos = np.searchsorted(values_sorted, targets)
    best = np.empty(len(targets), dtype=int)
    dist = np.empty(len(targets))
    for k, (x, j) in enumerate(zip(targets, pos)):
        cand = []
        if j > 0:
            cand.append(abs(x - values_sorted[j - 1]))
        if j < m:
            cand.append(abs(x - values_sorted[j]))
        dmin = min(cand)
        lo = np.searchsorted(values_sorted, x - dmin, side="left")
        hi = np.searchsorted(values_sorted, x + dmin, side="right")
        lo, hi = max(lo - 1, 0), min(hi + 1, m)
        window = values_sorted[lo:hi]
        ok = np.abs(x - window) == dmin
        best[k] = index_sorted[lo:hi][ok].min()
        dist[k] = dmin
    return best, dist


def nn_match(d: Dataset, p: PropensityResult, cfg: MatchConfig | None = None) -> MatchResult:
    """Nearest-neighbor matching on the linear propensity score.

    With ``method="nn_caliper"`` pairs farther apart than ``caliper_sd``
    pooled standard deviations of the retained linear scores are dropped and
    their treated rows discarded.
    """
    cfg = cfg or MatchConfig(method="nn")
    a = p.treated
    s = p.linear_score
    keep = _retained(p, cfg)
    discarded = ~keep
    t_idx = np.flatnonzero(keep & (a == 1))
    c_idx = np.flatnonzero(keep & (a == 0))
    if len(c_idx) == 0:
        raise NoControlsAvailable("no control rows left to match")
    caliper = None
    if cfg.method == "nn_caliper":
        caliper = cfg.caliper_sd * pooled_sd(s[keep])

    pairs = []
    if cfg.with_replacement:
        order = np.lexsort((c_idx, s[c_idx]))
        cs, ci = s[c_idx][order], c_idx[order]
        best, dist = _nearest_sorted(cs, ci, s[t_idx])
        for t, c, dd in zip(t_idx, best, dist):
            pairs.append((int(t), int(c), float(dd)))
    else:
        available = set(c_idx.tolist())
        for t in sorted(t_idx, key=lambda i: (-s[i], i)):
            if not available:
                break
            pool = np.fromiter(sorted(available), dtype=int)
            dd = np.abs(s[pool] - s[t])
            k = int(np.argmin(dd))
            pairs.append((int(t), int(pool[k]), float(dd[k])))
            available.discard(int(pool[k]))
        paired = {t for t, _, _ in pairs}
        for t in t_idx:
            if int(t) not in paired:
                discarded[t] = True

    if caliper is not None:
        kept = []
        for t, c, dd in pairs:
            if dd <= caliper:
                kept.append((t, c, dd))
            else:
                discarded[t] = True
        pairs = kept
    pairs.sort()
    return _finish(MatchResult(
        config=cfg, treated=a, pairs=tuple(pairs), discarded=discarded, caliper=caliper,
    ))


def mahalanobis_whitener(x: np.ndarray, group: np.ndarray) -> np.ndarray:
    """Matrix ``L^{-1}`` with ``L L' = S``, S the pooled within-group covariance plus a small ridge."""
    k = x.shape[1]
    parts = []
    for g in (0, 1):
        xg = x[group == g]
        if len(xg) > 1:
            parts.append((len(xg) - 1) * np.cov(xg, rowvar=False).reshape(k, k))
    S = sum(parts) / max(len(x) - 2, 1) if parts else np.eye(k)
    ridge = RIDGE * max(np.trace(S), 1.0) / k
    S = S + ridge * np.eye(k)
    L = linalg.cholesky(S, lower=True)
    return linalg.solve_triangular(L, np.eye(k), lower=True)


def mahalanobis_caliper_match(d: Dataset, p: PropensityResult,
                              cfg: MatchConfig | None = None) -> MatchResult:
    """Mahalanobis matching on the features among controls inside the propensity caliper.

    Treated rows with an empty donor pool are discarded.
    """
    cfg = cfg or MatchConfig(method="mahalanobis_caliper")
    a = p.treated
    s = p.linear_score
    keep = _retained(p, cfg)
    discarded = ~keep
    t_idx = np.flatnonzero(keep & (a == 1))
    c_idx = np.flatnonzero(keep & (a == 0))
    if len(c_idx) == 0:
        raise NoControlsAvailable("no control rows left to match")
    caliper = cfg.caliper_sd * pooled_sd(s[keep])
    x = d.features()
    if x.shape[1]:
        z = x @ mahalanobis_whitener(x[keep], a[keep]).T
    else:
        z = np.zeros((d.n, 1))

    order = np.lexsort((c_idx, s[c_idx]))
    cs, ci = s[c_idx][order], c_idx[order]
    available = None if cfg.with_replacement else set(c_idx.tolist())

    def match_one(t):
        st = s[t]
        lo = max(np.searchsorted(cs, st - caliper, side="left") - 1, 0)
        hi = min(np.searchsorted(cs, st + caliper, side="right") + 1, len(cs))
        pool = ci[lo:hi]
        pool = pool[np.abs(s[pool] - st) <= caliper]
        if available is not None:
            pool = np.array([c for c in pool if c in available], dtype=int)
        if len(pool) == 0:
            return None
        d2 = np.sum((z[pool] - z[t]) ** 2, axis=1)
        best = pool[d2 == d2.min()].min()
        return int(t), int(best), float(abs(s[best] - st))

    if cfg.with_replacement:
        chunks = np.array_split(t_idx, max(1, min(worker_count(), len(t_idx))))
        if len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                parts = list(pool.map(lambda ch: [match_one(t) for t in ch], chunks))
            found = [r for part in parts for r in part]
        else:
            found = [match_one(t) for t in t_idx]
    else:
        found = []
        for t in sorted(t_idx, key=lambda i: (-s[i], i)):
            r = match_one(t)
            found.append(r)
            if r is not None:
                available.discard(r[1])
        found_map = {r[0]: r for r in found if r is not None}
        found = [found_map.get(int(t)) for t in t_idx]
        for t in t_idx:
            if int(t) not in found_map:
                discarded[t] = True

    pairs = []
    for t, r in zip(t_idx, found):
        if r is None:
            discarded[t] = True
        else:
            pairs.append(r)
    pairs.sort()
    return _finish(MatchResult(
        config=cfg, treated=a, pairs=tuple(pairs), discarded=discarded, caliper=caliper,
    ))


def candidate_edges_1d(scores, treated) -> list[tuple[int, int]]:
    """Treated-control links that can appear in some optimal full matching.

    With ``mu(v)`` the distance from ``v`` to its nearest opposite-group
    point, an optimal full matching exists that uses only links with
    ``d(u, v) < mu(u) + mu(v)`` plus one nearest link per row. Scanning
    outward from ``u`` can stop at the first same-group point at distance
    ``>= mu(u)``: nothing beyond it qualifies. Returned as ``(t, c)`` index
    pairs into ``scores``.
    """
    s = np.asarray(scores, dtype=float)
    g = np.asarray(treated).astype(int)
    n = len(s)
    order = np.lexsort((np.arange(n), s))
    xs = s[order].tolist()
    gs = g[order].tolist()
    orig = order.tolist()

    mu = [0.0] * n
    nearest = [0] * n
    for side in (1, 0):
        opp = np.flatnonzero(g == 1 - side)
        oo = opp[np.lexsort((opp, s[opp]))]
        vals = s[oo]
        mine = np.flatnonzero(g == side)
        best, dist = _nearest_sorted(vals, oo, s[mine])
        for i, b, dd in zip(mine, best, dist):
            mu[i] = float(dd)
            nearest[i] = int(b)

    edges = set()
    for i in range(n):
        j = nearest[i]
        edges.add((i, j) if g[i] == 1 else (j, i))
    for pos in range(n):
        u = orig[pos]
        xu, gu, mu_u = xs[pos], gs[pos], mu[u]
        for step in (-1, 1):
            k = pos + step
            while 0 <= k < n:
                dist = abs(xu - xs[k])
                if gs[k] == gu:
                    if dist >= mu_u:
                        break
                else:
                    v = orig[k]
                    if dist < mu_u + mu[v]:
                        edges.add((u, v) if gu == 1 else (v, u))
                k += step
    return sorted(edges)


def optimal_full_match(scores, treated, *, sparsify: bool = True,
                       resolution: float = COST_RESOLUTION):
    """Optimal full matching of all rows on a one-dimensional score.

    Returns ``(subclasses, links)``: subclasses as sorted tuples of row
    positions, and links as ``(t, c, distance)``. The total link distance is
    minimal over all partitions into subclasses of one treated with one or
    more controls or one control with one or more treated.

    The problem is a minimum-cost edge cover of the bipartite treated-control
    graph. Each connected component of the candidate graph is solved as a
    min-cost circulation with unit lower bounds on every row node:
    S -> t (>= 1), t -> c (0/1, cost = distance), c -> T (>= 1), T -> S
    free. Lower bounds are removed with the usual auxiliary source/sink
    construction. Costs are distances rounded to ``resolution``.
    """
    s = np.asarray(scores, dtype=float)
    g = np.asarray(treated).astype(int)
    n = len(s)
    if not ((g == 1).any() and (g == 0).any()):
        raise InternalFlowError("full matching needs at least one treated and one control row")
    if sparsify:
        links = candidate_edges_1d(s, g)
    else:
        links = [(int(t), int(c)) for t in np.flatnonzero(g == 1) for c in np.flatnonzero(g == 0)]

    arr = np.asarray(links, dtype=int).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(arr)), (arr[:, 0], arr[:, 1])), shape=(n, n))
    _, label = connected_components(graph, directed=False)
    by_comp = defaultdict(list)
    for t, c in links:
        by_comp[label[t]].append((t, c))

    kept = []
    for comp in sorted(by_comp):
        kept.extend(_edge_cover(s, g, by_comp[comp], resolution))

    degree = defaultdict(int)
    for t, c in kept:
        degree[t] += 1
        degree[c] += 1
    star = defaultdict(set)
    for t, c in kept:
        center = c if degree[c] > 1 else t
        star[center].update((t, c))
    subclasses = sorted(tuple(sorted(int(i) for i in members)) for members in star.values())
    covered = sorted(i for sub in subclasses for i in sub)
    if covered != list(range(n)):
        raise InternalFlowError("flow solution does not partition the rows into subclasses")
    links_out = sorted((int(t), int(c), float(abs(s[t] - s[c]))) for t, c in kept)
    return subclasses, links_out


def _edge_cover(s, g, links, resolution):
    """Minimum-cost star-forest cover of the rows touched by ``links``."""
    rows = sorted({i for link in links for i in link})
    t_rows = [i for i in rows if g[i] == 1]
    c_rows = [i for i in rows if g[i] == 0]
    nt, nc = len(t_rows), len(c_rows)
    node = {r: 4 + k for k, r in enumerate(t_rows + c_rows)}
    deg = defaultdict(int)
    for t, c in links:
        deg[t] += 1
        deg[c] += 1

    # node ids: 0 aux source, 1 aux sink, 2 S, 3 T, then rows
    AUX_S, AUX_T, S, T = 0, 1, 2, 3
    net = MinCostFlow(4 + nt + nc)
    for t in t_rows:
        net.add_edge(AUX_S, node[t], 1, 0)
        if deg[t] > 1:
            net.add_edge(S, node[t], deg[t] - 1, 0)
    net.add_edge(S, AUX_T, nt, 0)
    for c in c_rows:
        net.add_edge(node[c], AUX_T, 1, 0)
        if deg[c] > 1:
            net.add_edge(node[c], T, deg[c] - 1, 0)
    net.add_edge(AUX_S, T, nc, 0)
    net.add_edge(T, S, nt + nc, 0)
    arc_of = {}
    for t, c in links:
        cost = int(round(abs(s[t] - s[c]) / resolution))
        arc_of[(t, c)] = net.add_edge(node[t], node[c], 1, cost)

    flow, _ = net.solve(AUX_S, AUX_T, nt + nc)
    if flow != nt + nc:
        raise InternalFlowError(f"lower bounds infeasible: routed {flow} of {nt + nc} units")

    chosen = [(t, c) for (t, c), e in arc_of.items() if net.flow_on(e) > 0]
    degree = defaultdict(int)
    for t, c in chosen:
        degree[t] += 1
        degree[c] += 1
    # a link whose two ends are both covered elsewhere is redundant (zero cost at the optimum)
    kept = []
    for t, c in sorted(chosen, key=lambda tc: (-abs(s[tc[0]] - s[tc[1]]), tc)):
        if degree[t] > 1 and degree[c] > 1:
            degree[t] -= 1
            degree[c] -= 1
        else:
            kept.append((t, c))
    return kept


def full_match(d: Dataset, p: PropensityResult, cfg: MatchConfig | None = None) -> MatchResult:
    """Optimal full matching on the linear propensity score of the retained rows."""
    cfg = cfg or MatchConfig(method="full")
    a = p.treated
    keep = _retained(p, cfg)
    rows = np.flatnonzero(keep)
    if not ((a[rows] == 1).any() and (a[rows] == 0).any()):
        raise NoControlsAvailable("full matching needs retained treated and control rows")
    subs, links = optimal_full_match(p.linear_score[rows], a[rows])
    subclasses = tuple(tuple(int(rows[i]) for i in sub) for sub in subs)
    pairs = tuple((int(rows[t]), int(rows[c]), dist) for t, c, dist in links)
    return _finish(MatchResult(
        config=cfg, treated=a, pairs=pairs, subclasses=subclasses, discarded=~keep,
    ))


def match(d: Dataset, p: PropensityResult | None, cfg: MatchConfig) -> MatchResult:
    if cfg.method == "exact":
        return exact_match(d, cfg)
    if p is None:
        raise ValueError(f"{cfg.method} matching needs propensity scores")
    if cfg.method in ("nn", "nn_caliper"):
        return nn_match(d, p, cfg)
    if cfg.method == "mahalanobis_caliper":
        return mahalanobis_caliper_match(d, p, cfg)
    return full_match(d, p, cfg)
