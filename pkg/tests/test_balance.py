import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairness_audit.balance import (
    JitterData,
    QQData,
    balance_report,
    jitter_data,
    qq_data,
    qq_to_px,
    render_svg,
    standardized_mean_difference,
    weighted_quantiles,
)
from fairness_audit.errors import WriteError, ZeroVarianceFeature
from fairness_audit.matching import MatchConfig, MatchResult
from fairness_audit.propensity import propensity_from_probability
from conftest import synthetic, synthetic_match

GOLDEN = Path(__file__).parent / "golden"
METHODS = ("nn", "nn_caliper", "mahalanobis_caliper", "full")


def test_identical_groups_zero():
    v = np.array([1.0, 2, 3, 1, 2, 3])
    assert standardized_mean_difference(v, [1, 1, 1, 0, 0, 0]) == 0


def test_hand_computed_smd():
    v = np.array([1.0, 2, 3, 0, 1, 2])
    assert standardized_mean_difference(v, [1, 1, 1, 0, 0, 0]) == pytest.approx(1.0, abs=1e-15)


def test_zero_variance():
    with pytest.raises(ZeroVarianceFeature):
        standardized_mean_difference(np.ones(4), [1, 1, 0, 0])


def test_denominator_ignores_weights():
    v = np.array([1.0, 2, 3, 0, 1, 2])
    g = [1, 1, 1, 0, 0, 0]
    w = np.array([0, 1, 0, 0, 1, 0.0])
    # weighted means 2 and 1, pre-match variances 1 and 1
    assert standardized_mean_difference(v, g, w) == pytest.approx(1.0)


# shifts are bounded relative to the scale: rounding the transformed values
# costs about ulp(shift) / scale, which must stay well below the tolerance
@given(
    scale=st.floats(1e-2, 1e2),
    shift=st.floats(-10, 10),
    seed=st.integers(0, 10_000),
)
def test_smd_affine_invariance(scale, shift, seed):
    r = np.random.default_rng(seed)
    v = r.normal(size=40)
    g = np.r_[np.ones(20), np.zeros(20)]
    w = r.uniform(0, 2, 40)
    a = standardized_mean_difference(v, g, w)
    b = standardized_mean_difference(scale * v + shift, g, w)
    assert abs(a - b) < 1e-10 * max(1.0, a) + 1e-10


@pytest.mark.parametrize("seed", range(20))
def test_synthetic_d_bar_band_and_dominance(seed):
    d, p = synthetic(seed)
    for method in METHODS:
        r = balance_report(d, p, synthetic_match(seed, method))
        assert 1.3 <= r.d_bar_before <= 2.0
        assert r.d_bar_after <= r.d_bar_before
        assert all(v >= 0 for v in r.per_feature_smd_before.values())
        assert all(v >= 0 for v in r.per_feature_smd_after.values())


def test_report_dict_labels_feature_smds():
    d, p = synthetic(0)
    out = balance_report(d, p, synthetic_match(0, "full")).to_dict()
    assert "supplementary" in out["per_feature_smd"]["note"]
    assert set(out["per_feature_smd"]["before"]) == set(d.feature_names)
    assert out["n_matched"]["treated"] > 0


def test_qq_identical_samples():
    v = np.array([3.0, 1, 2, 5, 3.0, 1, 2, 5])
    g = np.r_[np.ones(4), np.zeros(4)]
    for a, b in qq_data(v, g, n_quantiles=9):
        assert a == b


def test_qq_location_shift():
    v = np.array([0.0, 1.5, 2, 7])
    x = np.r_[v, v + 1]
    g = np.r_[np.ones(4), np.zeros(4)]
    for a, b in qq_data(x, g, n_quantiles=11):
        assert b - a == pytest.approx(1.0, abs=1e-12)


def test_qq_requires_two_quantiles():
    with pytest.raises(ValueError):
        qq_data([1.0, 2.0], [1, 0], n_quantiles=1)


def test_weighted_quantiles_replication_consistent(rng):
    v = rng.normal(size=15)
    w = rng.uniform(0.1, 2, 15)
    levels = np.linspace(0.05, 0.95, 7)
    a = weighted_quantiles(v, w, levels)
    b = weighted_quantiles(np.r_[v, v, v], np.r_[w, w, w], levels)
    c = weighted_quantiles(v, 3 * w, levels)
    np.testing.assert_allclose(a, b, atol=1e-14)
    np.testing.assert_allclose(a, c, atol=1e-14)


def _max_gap(pts):
    arr = np.asarray(pts)
    return np.max(np.abs(arr[:, 0] - arr[:, 1]))


def _mean_gap(pts):
    arr = np.asarray(pts)
    return np.mean(np.abs(arr[:, 0] - arr[:, 1]))


def test_full_matching_aligns_quantiles():
    feature_pre, feature_post = [], []
    for seed in range(20):
        d, p = synthetic(seed)
        m = synthetic_match(seed, "full")
        s, g, w = p.linear_score, p.treated, m.match_weight
        # the matching distance itself: every draw improves at least threefold
        assert _max_gap(qq_data(s, g)) >= 3 * _max_gap(qq_data(s, g, w))
        x = d.features()
        for j in range(x.shape[1]):
            feature_pre.append(_mean_gap(qq_data(x[:, j], g)))
            feature_post.append(_mean_gap(qq_data(x[:, j], g, w)))
    # individual features: mean absolute quantile gap, averaged over draws
    assert np.mean(feature_pre) >= 3 * np.mean(feature_post)


def _toy_match():
    s = np.array([-1.0, 0.0, 0.5, 0.1, 0.4, 2.0])
    a = np.array([1, 1, 1, 0, 0, 0])
    p = propensity_from_probability(1 / (1 + np.exp(-s)), a)
    w = np.array([1, 1, 0, 4, 1, 0.0])
    m = MatchResult(MatchConfig(method="nn"), a.astype(float), pairs=(), match_weight=w,
                    discarded=w == 0)
    return p, m


def test_jitter_radius_and_lanes():
    p, m = _toy_match()
    j = jitter_data(p, m, seed=1)
    assert j.radius[2] == 0 and j.radius[5] == 0
    assert j.radius[3] / j.radius[0] == pytest.approx(2.0)
    assert j.lane.tolist() == [1, 1, 0, 2, 2, 3]


def test_jitter_deterministic():
    p, m = _toy_match()
    np.testing.assert_array_equal(jitter_data(p, m, 5).offset, jitter_data(p, m, 5).offset)
    assert not np.array_equal(jitter_data(p, m, 5).offset, jitter_data(p, m, 6).offset)


def test_empty_svg_is_valid_xml(tmp_path):
    path = render_svg(QQData("empty", ()), tmp_path / "e.svg")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg") and root.get("version") == "1.1"
    assert not root.findall(".//{http://www.w3.org/2000/svg}circle")
    empty = JitterData(np.zeros(0), np.zeros(0, int), np.zeros(0), np.zeros(0))
    ET.parse(render_svg(empty, tmp_path / "j.svg"))


def test_diagonal_markers_on_reference_line(tmp_path):
    v = np.linspace(-2, 3, 20)
    path = render_svg(QQData("diag", tuple(zip(v, v))), tmp_path / "d.svg")
    ns = {"s": "http://www.w3.org/2000/svg"}
    root = ET.parse(path).getroot()
    (x0, y0), (x1, y1) = qq_to_px(-2, -2, 3), qq_to_px(3, -2, 3)
    for c in root.findall(".//s:circle", ns):
        cx, cy = float(c.get("cx")), float(c.get("cy"))
        # distance from the 45-degree reference line in pixel space
        dist = abs((y1 - y0) * cx - (x1 - x0) * cy + x1 * y0 - y1 * x0) / np.hypot(x1 - x0, y1 - y0)
        assert dist < 0.5


def _fixtures():
    r = np.random.default_rng(2024)
    qq = QQData("x<1> & y", tuple((float(a), float(b)) for a, b in r.normal(size=(12, 2))))
    j = JitterData(r.normal(size=8), np.array([0, 1, 1, 2, 2, 3, 1, 2]), r.uniform(-0.3, 0.3, 8),
                   np.array([0, 6, 6, 3, 4.2, 0, 6, 1.5]))
    return {"qq_fixture.svg": qq, "jitter_fixture.svg": j}


@pytest.mark.parametrize("name", ["qq_fixture.svg", "jitter_fixture.svg"])
def test_golden_files(tmp_path, name):
    out = render_svg(_fixtures()[name], tmp_path / name)
    assert out.read_bytes() == (GOLDEN / name).read_bytes()
    ET.parse(out)


def test_render_is_deterministic(tmp_path):
    p, m = _toy_match()
    a = render_svg(jitter_data(p, m, 3), tmp_path / "a.svg").read_bytes()
    b = render_svg(jitter_data(p, m, 3), tmp_path / "b.svg").read_bytes()
    assert a == b
    assert re.search(rb"<svg[^>]+version=\"1.1\"", a)


def test_write_error(tmp_path):
    with pytest.raises(WriteError):
        render_svg(QQData("x", ()), tmp_path / "missing_dir" / "x.svg")
