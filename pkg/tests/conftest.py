import math

import numpy as np
import pytest

from opinionpool import DiagonalGaussian, ExpertSet


def npdf(z, mean, var):
    """Plain 1-D normal density, independent of the library code."""
    return np.exp(-((z - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * math.pi * var)


def trapz_affinity_1d(m1, v1, m2, v2, n=20001):
    """Trapezoid quadrature of int sqrt(q1 q2) over a +-12 sd window.

    Vectorised over arrays of pairs.
    """
    m1, v1, m2, v2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (m1, v1, m2, v2))
    sd = np.sqrt(np.maximum(v1, v2))
    lo = np.minimum(m1, m2) - 12.0 * sd
    hi = np.maximum(m1, m2) + 12.0 * sd
    t = np.linspace(0.0, 1.0, n)
    z = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    f = np.sqrt(npdf(z, m1[:, None], v1[:, None]) * npdf(z, m2[:, None], v2[:, None]))
    return np.trapezoid(f, z, axis=1)


def random_expert_set(rng, m_max=4, d_max=3, mu_abs=3.0, var_lo=0.1, var_hi=2.0, weighted=False, m=None, d=None):
    m = m if m is not None else int(rng.integers(1, m_max + 1))
    d = d if d is not None else int(rng.integers(1, d_max + 1))
    means = rng.uniform(-mu_abs, mu_abs, (m, d))
    variances = rng.uniform(var_lo, var_hi, (m, d))
    weights = None
    if weighted:
        w = rng.uniform(0.1, 1.0, m)
        weights = w / w.sum()
    return ExpertSet.from_arrays(means, variances, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def figure2_pair():
    return DiagonalGaussian([0.0, 0.0], [0.5, 0.5]), DiagonalGaussian([4.0, 4.0], [0.2, 0.2])
