"""Synthetic benchmark population with known (by default zero) protected-attribute effect.

Five iid standard-normal features, a protected indicator drawn from the
logistic of their sum, and an outcome that is a fixed weighted sum of the
features, optionally plus an injected effect ``tau * A`` and Gaussian noise.
All confounding is observed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import Dataset, from_arrays

N_FEATURES = 5


@dataclass(frozen=True)
class SynthConfig:
    n: int = 1000
    seed: int = 0
    tau: float = 0.0
    noise_sd: float = 0.0
    weight_vector: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n < 10:
            raise ValueError(f"n must be at least 10, got {self.n}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if self.weight_vector is not None and len(self.weight_vector) != N_FEATURES:
            raise ValueError(f"weight_vector needs {N_FEATURES} entries")


def generate(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    # draw order is fixed: weights, features, treatment, noise
    drawn = rng.uniform(0.0, 1.0, size=N_FEATURES)
    w = np.asarray(cfg.weight_vector, dtype=float) if cfg.weight_vector is not None else drawn
    x = rng.standard_normal((cfg.n, N_FEATURES))
    a = (rng.uniform(size=cfg.n) < expit(x.sum(axis=1))).astype(float)
    y = x @ w
    if cfg.tau:
        y = y + cfg.tau * a
    if cfg.noise_sd > 0:
        y = y + rng.normal(0.0, cfg.noise_sd, size=cfg.n)
    meta = {
        "generator": "synthetic",
        "n": cfg.n,
        "seed": cfg.seed,
        "tau": cfg.tau,
        "noise_sd": cfg.noise_sd,
        "weight_vector": [float(v) for v in w],
    }
    features = {f"x{j + 1}": x[:, j] for j in range(N_FEATURES)}
    return from_arrays(features, a, y, metadata=meta)
