"""Diagonal Gaussians, expert sets, and pairwise Hellinger cross terms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ._rng import SeedLike, make_rng

#: Floor applied to every variance entry on construction.
VARIANCE_FLOOR = 1e-12
_BROADCAST_LIMIT = 1 << 16

_LOG_2PI = math.log(2.0 * math.pi)


class DimensionMismatch(ValueError):
    """Raised when vectors or experts disagree on dimensionality."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiagonalGaussian:
    """Gaussian on R^D with diagonal covariance.

    Attributes:
        mean: Mean vector, shape ``(D,)``.
        variance: Per-dimension variances, shape ``(D,)``. Entries below
            :data:`VARIANCE_FLOOR` are raised to it.
    """

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        var = np.array(self.variance, dtype=np.float64).reshape(-1)
        if mean.size == 0:
            raise ValueError("a Gaussian needs dimension D >= 1")
        if mean.shape != var.shape:
            raise DimensionMismatch(
                f"mean has length {mean.size} but variance has length {var.size}"
            )
        if not (np.isfinite(mean).all() and np.isfinite(var).all()):
            raise ValueError("mean and variance must be finite")
        if (var < 0).any():
            raise ValueError("variance entries must be non-negative")
        var = np.maximum(var, VARIANCE_FLOOR)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "variance", _frozen(var))

    @classmethod
    def _trusted(cls, mean: np.ndarray, variance: np.ndarray) -> "DiagonalGaussian":
        # for callers that validated and floored whole arrays already
        g = object.__new__(cls)
        object.__setattr__(g, "mean", _frozen(np.array(mean, dtype=np.float64)))
        object.__setattr__(g, "variance", _frozen(np.array(variance, dtype=np.float64)))
        return g

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def _log_norm(self) -> float:
        return 0.5 * (self.dim * _LOG_2PI + float(np.sum(np.log(self.variance))))

    def log_density(self, z) -> np.ndarray | float:
        return log_density(self, z)

    def sample(self, n: int, seed: SeedLike) -> np.ndarray:
        return sample(self, n, seed)

    def trace_covariance(self) -> float:
        return float(np.sum(self.variance))

    def __eq__(self, other):
        if not isinstance(other, DiagonalGaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(
            self.variance, other.variance
        )

    def __hash__(self):
        return hash((self.mean.tobytes(), self.variance.tobytes()))

    def __repr__(self):
        return f"DiagonalGaussian(mean={self.mean.tolist()}, variance={self.variance.tolist()})"


def _as_points(z, dim: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim <= 1
    z2 = z.reshape(1, -1) if single else z
    if z2.ndim != 2 or z2.shape[1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {z.shape}")
    return z2, single


def log_density(g: DiagonalGaussian, z) -> np.ndarray | float:
    """Log of N(z; mean, diag(variance)).

    ``z`` may be a single point of shape ``(D,)`` (returns a float) or a batch
    of shape ``(n, D)`` (returns an array of shape ``(n,)``).
    """
    pts, single = _as_points(z, g.dim)
    diff = pts - g.mean
    out = -0.5 * np.sum(diff * diff / g.variance, axis=1) - g._log_norm
    return float(out[0]) if single else out


def sample(g: DiagonalGaussian, n: int, seed: SeedLike) -> np.ndarray:
    """Draw ``n`` i.i.d. samples, shape ``(n, D)``."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = make_rng(seed)
    return g.mean + rng.standard_normal((n, g.dim)) * np.sqrt(g.variance)


@dataclass(frozen=True)
class CrossTerms:
    """Pairwise auxiliary quantities between two diagonal Gaussians.

    ``mu_ij`` and ``var_ij`` are the mean and variance of the normalised
    geometric mean sqrt(q_i q_j); ``affinity`` is the Bhattacharyya
    coefficient, the mass of sqrt(q_i q_j).
    """

    mu_ij: np.ndarray
    var_ij: np.ndarray
    log_affinity: float

    @property
    def affinity(self) -> float:
        return math.exp(self.log_affinity)


def _pair_terms(mu_i, var_i, mu_j, var_j):
    """Broadcasting core shared by :func:`cross_terms` and the aggregators.

    Written so that swapping (i, j) gives bit-identical results, and
    identical inputs give ``log_affinity == 0`` exactly.
    """
    vsum = var_i + var_j
    mu_ij = (mu_i * var_j + mu_j * var_i) / vsum
    var_ij = 2.0 * (var_i * var_j) / vsum
    sd_prod = np.sqrt(var_i * var_j)
    dmu = mu_i - mu_j
    per_dim = 0.5 * np.log(2.0 * sd_prod / vsum) - dmu * dmu / (4.0 * vsum)
    log_aff = np.minimum(np.sum(per_dim, axis=-1), 0.0)
    return mu_ij, var_ij, log_aff


def cross_terms(a: DiagonalGaussian, b: DiagonalGaussian) -> CrossTerms:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    mu_ij, var_ij, log_aff = _pair_terms(a.mean, a.variance, b.mean, b.variance)
    return CrossTerms(_frozen(mu_ij), _frozen(var_ij), float(log_aff))


def pairwise_cross_terms(means: np.ndarray, variances: np.ndarray):
    """All-pairs cross terms for stacked experts.

    Args:
        means: Expert means, shape ``(M, D)``.
        variances: Expert variances, shape ``(M, D)``.

    Returns:
        ``(mu_ij, var_ij, log_affinity)`` with shapes ``(M, M, D)``,
        ``(M, M, D)`` and ``(M, M)``. The diagonal holds the self terms
        (``log_affinity == 0``).
    """
    return _pair_terms(
        means[:, None, :], variances[:, None, :], means[None, :, :], variances[None, :, :]
    )


def _check_weights(weights, m: int) -> tuple[np.ndarray, bool]:
    if weights is None:
        return np.full(m, 1.0 / m), True
    w = np.array(weights, dtype=np.float64).reshape(-1)
    if w.size != m:
        raise ValueError(f"{m} experts but {w.size} weights")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w, bool((w == w[0]).all())


class ExpertSet:
    """Ordered experts with pooling weights on the simplex.

    Args:
        experts: One or more :class:`DiagonalGaussian` of common dimension.
        weights: Non-negative weights summing to one (within 1e-9). Uniform
            when omitted.
    """

    def __init__(self, experts: Iterable[DiagonalGaussian], weights: Sequence[float] | None = None):
        experts = tuple(experts)
        if not experts:
            raise ValueError("an expert set needs at least one expert")
        dims = {e.dim for e in experts}
        if len(dims) != 1:
            raise DimensionMismatch(f"experts have mixed dimensions {sorted(dims)}")
        w, uniform = _check_weights(weights, len(experts))
        means = np.array([e.mean for e in experts])
        variances = np.array([e.variance for e in experts])
        self._assign(means, variances, w, uniform, experts)

    def _assign(self, means, variances, weights, uniform, experts=None):
        self.means = _frozen(means)
        self.variances = _frozen(variances)
        self.weights = _frozen(weights)
        self.is_uniform = uniform
        self._experts = experts

    @classmethod
    def _from_checked(cls, means, variances, weights=None) -> "ExpertSet":
        # arrays already validated and floored; members are built on first access
        m = means.shape[0]
        out = object.__new__(cls)
        if weights is None:
            out._assign(means, variances, np.full(m, 1.0 / m), True)
        else:
            out._assign(means, variances, weights, bool((weights == weights[0]).all()))
        return out

    @classmethod
    def from_arrays(cls, means, variances, weights=None) -> "ExpertSet":
        """Build a set from ``(M, D)`` mean and variance arrays."""
        means = np.array(means, dtype=np.float64, ndmin=2)
        variances = np.array(variances, dtype=np.float64, ndmin=2)
        if means.shape != variances.shape:
            raise DimensionMismatch(f"means {means.shape} vs variances {variances.shape}")
        if means.ndim != 2 or means.size == 0:
            raise ValueError("means and variances must be non-empty (M, D) arrays")
        if not (np.isfinite(means).all() and np.isfinite(variances).all()):
            raise ValueError("mean and variance must be finite")
        if (variances < 0).any():
            raise ValueError("variance entries must be non-negative")
        w, uniform = _check_weights(weights, means.shape[0])
        out = object.__new__(cls)
        out._assign(means, np.maximum(variances, VARIANCE_FLOOR), w, uniform)
        return out

    @property
    def experts(self) -> tuple[DiagonalGaussian, ...]:
        if self._experts is None:
            self._experts = tuple(DiagonalGaussian._trusted(m, v) for m, v in zip(self.means, self.variances))
        return self._experts

    @property
    def size(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self):
        return self.size

    def __iter__(self):
        return iter(self.experts)

    def __getitem__(self, i):
        return self.experts[i]

    def subset(self, indices: Sequence[int]) -> "ExpertSet":
        """Experts at ``indices`` with uniform weights."""
        order = [int(i) for i in indices]
        if not order:
            raise ValueError("an expert set needs at least one expert")
        return ExpertSet._from_checked(self.means[order], self.variances[order])

    def uniform(self) -> "ExpertSet":
        """The same experts with uniform weights."""
        return self if self.is_uniform else ExpertSet._from_checked(self.means, self.variances)

    def permuted(self, order: Sequence[int]) -> "ExpertSet":
        order = [int(i) for i in order]
        if sorted(order) != list(range(self.size)):
            raise ValueError(f"{order} is not a permutation of {self.size} experts")
        out = object.__new__(type(self))
        weights = self.weights.copy() if self.is_uniform else self.weights[order]
        out._assign(self.means[order], self.variances[order], weights, self.is_uniform)
        return out

    def component_log_densities(self, z) -> np.ndarray:
        """Log density of every expert at each point, shape ``(n, M)``."""
        pts, _ = _as_points(z, self.dim)
        log_norm = 0.5 * (self.dim * _LOG_2PI + np.sum(np.log(self.variances), axis=1))
        if pts.shape[0] * self.size * self.dim <= _BROADCAST_LIMIT:
            diff = pts[:, None, :] - self.means[None, :, :]
            return -0.5 * np.sum(diff * diff / self.variances[None, :, :], axis=2) - log_norm[None, :]
        out = np.empty((pts.shape[0], self.size))
        # one column per expert avoids a large (n, M, D) temporary
        for j in range(self.size):
            diff = pts - self.means[j]
            out[:, j] = -0.5 * ((diff * diff) @ (1.0 / self.variances[j])) - log_norm[j]
        return out

    def __repr__(self):
        return f"{type(self).__name__}(M={self.size}, D={self.dim}, weights={self.weights.tolist()})"


def poe_aggregate(experts: ExpertSet) -> DiagonalGaussian:
    """Product of experts.

    Uniform weights give the plain product ``prod_j q_j``. Explicit weights
    scale each expert's precision by ``M * lambda_j`` so the exponents still
    sum to M.
    """
    prec_each = 1.0 / experts.variances
    if not experts.is_uniform:
        prec_each = prec_each * (experts.size * experts.weights)[:, None]
    precision = np.sum(prec_each, axis=0)
    var = 1.0 / precision
    mean = var * np.sum(prec_each * experts.means, axis=0)
    return DiagonalGaussian(mean, var)


def log_linear_aggregate(experts: ExpertSet) -> DiagonalGaussian:
    """Normalised weighted geometric mean ``c * prod_j q_j ** lambda_j``.

    This is the log-linear pool (the alpha -> 0 member of the Hoelder
    family). Its precision is the lambda-weighted average of the expert
    precisions, so under uniform weights it is M times wider than
    :func:`poe_aggregate`.
    """
    prec_each = experts.weights[:, None] / experts.variances
    precision = np.sum(prec_each, axis=0)
    var = 1.0 / precision
    mean = var * np.sum(prec_each * experts.means, axis=0)
    return DiagonalGaussian(mean, var)
