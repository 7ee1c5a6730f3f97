"""Independent reference computations used as test oracles.

Each oracle is deliberately naive: exhaustive enumeration or a generic
optimizer, sharing no code with the package.
"""

import itertools

import numpy as np
from scipy import optimize


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def full_match_optimum(scores, treated):
    """Minimum total treated-control distance over every valid full-match partition."""
    best = np.inf
    for part in set_partitions(list(range(len(scores)))):
        total = 0.0
        for sub in part:
            t = [i for i in sub if treated[i] == 1]
            c = [i for i in sub if treated[i] == 0]
            if not t or not c or (len(t) > 1 and len(c) > 1):
                break
            total += sum(abs(scores[i] - scores[j]) for i in t for j in c)
        else:
            best = min(best, total)
    return best


def logistic_mle(X, y, w=None):
    """Weighted logistic MLE from a generic quasi-Newton optimizer."""
    w = np.ones(len(y)) if w is None else np.asarray(w, float)

    def nll(b):
        eta = X @ b
        return float(np.sum(w * (np.logaddexp(0, eta) - y * eta)))

    def grad(b):
        mu = 1 / (1 + np.exp(-(X @ b)))
        return -X.T @ (w * (y - mu))

    res = optimize.minimize(nll, np.zeros(X.shape[1]), jac=grad, method="BFGS",
                            options={"gtol": 1e-11, "maxiter": 10000})
    return res.x


def poisson_binomial_tail_max(D, k, gamma):
    """Largest P(at least k successes) over every assignment of per-pair
    success probabilities in {1/(1+gamma), gamma/(1+gamma)} (2**D cases)."""
    lo, hi = 1 / (1 + gamma), gamma / (1 + gamma)
    best = 0.0
    for assign in itertools.product((lo, hi), repeat=D):
        dist = np.zeros(D + 1)
        dist[0] = 1.0
        for p in assign:
            dist[1:] = dist[1:] * (1 - p) + dist[:-1] * p
            dist[0] *= 1 - p
        best = max(best, dist[k:].sum())
    return best


def signed_rank_tail(ranks, stat, prob):
    """P(sum of ranks with positive sign >= stat), each sign positive with ``prob``."""
    ranks = np.asarray(ranks, float)
    total = 0.0
    for signs in itertools.product((0, 1), repeat=len(ranks)):
        s = np.array(signs)
        if s @ ranks >= stat - 1e-9:
            total += np.prod(np.where(s == 1, prob, 1 - prob))
    return total


def nearest_bruteforce(t_scores, c_scores):
    """Index of the nearest control for each treated score, lowest index on ties."""
    out = []
    for s in t_scores:
        d = [abs(s - c) for c in c_scores]
        out.append(min(range(len(d)), key=lambda j: (d[j], j)))
    return out
