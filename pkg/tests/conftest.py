import functools
import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

from fairness_audit.matching import MatchConfig, match  # noqa: E402
from fairness_audit.propensity import fit_propensity  # noqa: E402
from fairness_audit.synthgen import SynthConfig, generate  # noqa: E402


@functools.lru_cache(maxsize=None)
def synthetic(seed, n=1000, tau=0.0, noise_sd=0.0):
    d = generate(SynthConfig(n=n, seed=seed, tau=tau, noise_sd=noise_sd))
    return d, fit_propensity(d)


@functools.lru_cache(maxsize=None)
def synthetic_match(seed, method, n=1000, tau=0.0, noise_sd=0.0):
    d, p = synthetic(seed, n, tau, noise_sd)
    return match(d, p, MatchConfig(method=method))


@pytest.fixture
def write_csv_text(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
