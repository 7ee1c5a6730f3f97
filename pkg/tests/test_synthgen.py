import numpy as np
import pytest

from fairness_audit.face import estimate_face
from fairness_audit.fact import estimate_fact
from fairness_audit.synthgen import SynthConfig, generate
from conftest import synthetic, synthetic_match


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n=5)
    with pytest.raises(ValueError):
        SynthConfig(noise_sd=-1)
    with pytest.raises(ValueError):
        SynthConfig(weight_vector=(1.0, 2.0))


def test_bit_identical_for_fixed_seed():
    a, b = generate(SynthConfig(seed=9)), generate(SynthConfig(seed=9))
    assert a.frame.equals(b.frame)
    assert a.metadata == b.metadata
    assert not a.frame.equals(generate(SynthConfig(seed=10)).frame)


def test_roles_and_recorded_weights():
    d = generate(SynthConfig(seed=1))
    assert d.feature_names == ("x1", "x2", "x3", "x4", "x5")
    assert d.protected.name == "a" and d.outcome_column.name == "y"
    w = np.array(d.metadata["weight_vector"])
    assert np.all((w >= 0) & (w <= 1))
    np.testing.assert_allclose(d.outcome, d.features() @ w, atol=1e-12)


def test_fixed_weight_vector_and_effect():
    w = (1.0, 0.0, 0.0, 0.0, 0.0)
    d = generate(SynthConfig(seed=2, tau=3.0, weight_vector=w))
    np.testing.assert_allclose(d.outcome, d.features()[:, 0] + 3.0 * d.protected_indicator)


def test_treated_share_near_half():
    d = generate(SynthConfig(n=100_000, seed=0))
    assert 0.49 <= d.protected_indicator.mean() <= 0.51


@pytest.mark.parametrize("seed", range(5))
def test_feature_sanity_bands(seed):
    x = generate(SynthConfig(seed=seed)).features()
    assert np.all(np.abs(x.mean(0)) <= 0.1)
    assert np.all((x.var(0, ddof=1) >= 0.9) & (x.var(0, ddof=1) <= 1.1))


def test_treatment_confounded_with_features():
    d = generate(SynthConfig(n=10_000, seed=0))
    a = d.protected_indicator
    for j in range(5):
        assert np.corrcoef(a, d.features()[:, j])[0, 1] > 0


def test_default_setting_null_is_machine_noise():
    d, p = synthetic(0)
    assert abs(estimate_face(d, p).estimate) < 1e-8
    assert abs(estimate_fact(d, synthetic_match(0, "full")).estimate) < 1e-8


def test_naive_difference_biased_while_estimators_centered():
    tau = 1.0
    naive, face, fact = [], [], []
    for seed in range(100):
        d, p = synthetic(seed, tau=tau, noise_sd=0.1)
        a, y = d.protected_indicator, d.outcome
        naive.append(y[a == 1].mean() - y[a == 0].mean())
        face.append(estimate_face(d, p).estimate)
        fact.append(estimate_fact(d, synthetic_match(seed, "full", tau=tau, noise_sd=0.1)).estimate)
    assert np.mean(naive) - tau > 0.5
    assert abs(np.mean(face) - tau) < 0.02
    assert abs(np.mean(fact) - tau) < 0.02
