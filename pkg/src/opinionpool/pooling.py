"""Aggregation of Gaussian experts.

Linear pooling (MoE), the Hoelder-alpha family with Monte-Carlo
normalisation, the closed-form Hellinger (alpha = 0.5) moment-matched
Gaussian, its powerset mixture, and the diagonal Wasserstein barycenter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import SeedLike, make_rng, spawn
from .gaussian import (
    VARIANCE_FLOOR,
    DiagonalGaussian,
    ExpertSet,
    log_linear_aggregate,
    pairwise_cross_terms,
    poe_aggregate,
)

__all__ = [
    "ExpertSet",
    "GaussianMixture",
    "ISEstimate",
    "HolderMoments",
    "PooledDensity",
    "NotNormalizedError",
    "MOHEL_MAX_EXPERTS",
    "ESS_WARN_FRACTION",
    "moe_log_density",
    "moe_sample",
    "holder_log_density_unnorm",
    "holder_normalize",
    "holder_moments",
    "holder_sample",
    "hellinger_moments",
    "hellinger_aggregate",
    "mohel_aggregate",
    "wasserstein_barycenter",
    "poe_aggregate",
    "log_linear_aggregate",
]

logger = logging.getLogger(__name__)

#: Largest expert count accepted by :func:`mohel_aggregate` (2**20 - 1 subsets).
MOHEL_MAX_EXPERTS = 20
_MOHEL_CHUNK = 2048

#: Importance-sampling runs with ESS below this fraction of n are flagged.
ESS_WARN_FRACTION = 0.1


class NotNormalizedError(RuntimeError):
    """A Hoelder pool was used where a normalised density is required."""


class GaussianMixture(ExpertSet):
    """Finite mixture of diagonal Gaussians; the weights are mixture weights."""

    def log_density(self, z):
        return moe_log_density(self, z)

    def sample(self, n: int, seed: SeedLike) -> np.ndarray:
        return moe_sample(self, n, seed)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def variance(self) -> np.ndarray:
        second = self.weights @ (self.variances + self.means**2)
        return second - self.mean() ** 2


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2-D array.

    Same max-shift as scipy's ``logsumexp(a, axis=1)`` without its per-call
    dispatch cost, which dominates for the small arrays pooled densities are
    evaluated on.
    """
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _log_weights(experts: ExpertSet) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(experts.weights)


def _reduce(values: np.ndarray, z) -> np.ndarray | float:
    z = np.asarray(z)
    return float(values[0]) if z.ndim <= 1 else values


def moe_log_density(experts: ExpertSet, z):
    """log sum_j lambda_j q_j(z), evaluated with log-sum-exp."""
    lq = experts.component_log_densities(z)
    return _reduce(_logsumexp_rows(_log_weights(experts)[None, :] + lq), z)


def moe_sample(experts: ExpertSet, n: int, seed: SeedLike) -> np.ndarray:
    """Ancestral sampling: component j ~ Categorical(lambda), then z ~ q_j."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = make_rng(seed)
    idx = rng.choice(experts.size, size=n, p=experts.weights)
    eps = rng.standard_normal((n, experts.dim))
    return experts.means[idx] + eps * np.sqrt(experts.variances[idx])


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def holder_log_density_unnorm(experts: ExpertSet, alpha: float, z):
    """Unnormalised Hoelder pool ``(sum_j lambda_j q_j(z)**alpha) ** (1/alpha)`` in log space.

    At ``alpha == 1`` this is bit-identical to :func:`moe_log_density`.
    """
    alpha = _check_alpha(alpha)
    lq = experts.component_log_densities(z)
    out = _logsumexp_rows(_log_weights(experts)[None, :] + alpha * lq) / alpha
    return _reduce(out, z)


@dataclass(frozen=True)
class ISEstimate:
    """Importance-sampling estimate of a log normalising constant."""

    log_norm: float
    std_err: float
    ess: float
    n: int

    @property
    def low_ess(self) -> bool:
        return self.ess < ESS_WARN_FRACTION * self.n


def _proposal(experts: ExpertSet) -> ExpertSet:
    # uniform-weight MoE of the same experts
    return experts.uniform()


def _holder_is(experts: ExpertSet, alpha: float, n: int, seed: SeedLike):
    """Proposal draws and log importance weights for the Hoelder pool."""
    if n < 100:
        raise ValueError(f"importance sampling needs n >= 100, got {n}")
    proposal = _proposal(experts)
    z = moe_sample(proposal, n, seed)
    lq = experts.component_log_densities(z)
    # shared row maximum; the max cancels in log_target - log_prop
    top = lq.max(axis=1, keepdims=True)
    shifted = lq - top
    with np.errstate(divide="ignore"):
        log_target = np.log(np.exp(alpha * shifted) @ experts.weights) / alpha
    log_prop = np.log(np.mean(np.exp(shifted), axis=1))
    bad = ~np.isfinite(log_target)
    if np.any(bad):
        # zero-weight experts can leave every remaining term underflowed
        log_target[bad] = _logsumexp_rows(_log_weights(experts)[None, :] + alpha * shifted[bad]) / alpha
    return z, log_target - log_prop


def _ess(w: np.ndarray) -> float:
    return float(w.sum() ** 2 / np.sum(w * w))


def holder_normalize(experts: ExpertSet, alpha: float, n: int, seed: SeedLike) -> ISEstimate:
    """Estimate log of the Hoelder pool's mass by importance sampling.

    The proposal is the uniform-weight mixture of the experts. Because the
    power mean never exceeds the arithmetic mean, the weights are bounded by
    ``M * max(lambda)``. The standard error is the delta-method error of
    ``log(mean(w))``.
    """
    alpha = _check_alpha(alpha)
    _, logw = _holder_is(experts, alpha, n, seed)
    shift = float(np.max(logw))
    w = np.exp(logw - shift)
    mean_w = float(np.mean(w))
    rel_se = float(np.std(w, ddof=1)) / (math.sqrt(n) * mean_w)
    est = ISEstimate(shift + math.log(mean_w), rel_se, _ess(w), n)
    if est.low_ess:
        logger.warning("Hoelder normalisation ESS %.1f is below %.0f%% of n=%d", est.ess, 100 * ESS_WARN_FRACTION, n)
    return est


@dataclass(frozen=True)
class HolderMoments:
    """Self-normalised IS moments of a normalised Hoelder pool."""

    mean: np.ndarray
    variance: np.ndarray
    mean_se: np.ndarray
    variance_se: np.ndarray
    ess: float
    n: int


def holder_moments(experts: ExpertSet, alpha: float, n: int, seed: SeedLike) -> HolderMoments:
    """Per-coordinate mean and variance of the normalised Hoelder pool.

    Standard errors use the usual self-normalised IS approximation
    ``sqrt(sum w_i^2 (f_i - f_hat)^2) / sum w_i``. For the variance the
    statistic is ``(z - mean_hat)**2``.
    """
    alpha = _check_alpha(alpha)
    z, logw = _holder_is(experts, alpha, n, seed)
    w = np.exp(logw - np.max(logw))
    wsum = w.sum()
    wn = (w / wsum)[:, None]
    mean = np.sum(wn * z, axis=0)
    mean_se = np.sqrt(np.sum(wn**2 * (z - mean) ** 2, axis=0))
    sq = (z - mean) ** 2
    var = np.sum(wn * sq, axis=0)
    var_se = np.sqrt(np.sum(wn**2 * (sq - var) ** 2, axis=0))
    return HolderMoments(mean, var, mean_se, var_se, _ess(w), n)


def systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling from normalised ``weights``."""
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cdf, u, side="right")


def holder_sample(experts: ExpertSet, alpha: float, n: int, seed: SeedLike):
    """Approximate draws from the normalised Hoelder pool.

    Draws ``n`` proposal points, weights them, and systematically resamples
    ``n`` points. Returns ``(samples, ess)``.
    """
    alpha = _check_alpha(alpha)
    is_seed, rs_seed = spawn(seed, 2)
    z, logw = _holder_is(experts, alpha, n, is_seed)
    w = np.exp(logw - np.max(logw))
    w /= w.sum()
    idx = systematic_resample(w, n, make_rng(rs_seed))
    return z[idx], float(1.0 / np.sum(w * w))


def hellinger_moments(experts: ExpertSet) -> tuple[np.ndarray, np.ndarray]:
    """Mean and (unfloored) variance of the normalised alpha = 0.5 Hoelder pool.

    The pool is ``c * sum_i sum_j lambda_i lambda_j sqrt(q_i q_j)``; each
    ``sqrt(q_i q_j)`` is ``S_ij`` times a Gaussian with moments
    ``(mu_ij, var_ij)``, so the pool is a Gaussian mixture with weights
    ``lambda_i lambda_j S_ij / denom`` and the moments follow in closed form.
    The variance is accumulated about the pooled mean.
    """
    mu, var, log_s = pairwise_cross_terms(experts.means, experts.variances)
    idx = np.arange(experts.size)
    mu[idx, idx] = experts.means
    var[idx, idx] = experts.variances
    lam = experts.weights
    w = np.outer(lam, lam) * np.exp(log_s)
    denom = w.sum()
    mean = np.einsum("ij,ijd->d", w, mu) / denom
    spread = (mu - mean) ** 2 + var
    variance = np.einsum("ij,ijd->d", w, spread) / denom
    return mean, variance


def hellinger_aggregate(experts: ExpertSet) -> DiagonalGaussian:
    """Moment-matched diagonal Gaussian of the alpha = 0.5 Hoelder pool."""
    mean, variance = hellinger_moments(experts)
    return DiagonalGaussian(mean, np.maximum(variance, VARIANCE_FLOOR))


def hellinger_normalizer(experts: ExpertSet) -> float:
    """Closed-form mass ``sum lambda_j^2 + 2 sum_{i<j} lambda_i lambda_j S_ij``."""
    _, _, log_s = pairwise_cross_terms(experts.means, experts.variances)
    np.fill_diagonal(log_s, 0.0)
    return float(np.sum(np.outer(experts.weights, experts.weights) * np.exp(log_s)))


def mohel_aggregate(experts: ExpertSet) -> GaussianMixture:
    """Equal-weight mixture of Hellinger aggregates over all non-empty subsets.

    Subsets are uniformly weighted internally and ordered by bitmask
    (bit ``j`` set means expert ``j`` is included), ascending.
    """
    m = experts.size
    if m > MOHEL_MAX_EXPERTS:
        raise ValueError(
            f"mohel_aggregate supports at most {MOHEL_MAX_EXPERTS} experts "
            f"(2**M - 1 subsets), got {m}"
        )
    mu, var, log_s = pairwise_cross_terms(experts.means, experts.variances)
    diag = np.arange(m)
    mu[diag, diag] = experts.means
    var[diag, diag] = experts.variances
    s = np.exp(log_s)
    np.fill_diagonal(s, 1.0)

    masks = np.arange(1, 2**m, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(m)[None, :]) & 1).astype(np.float64)
    means = np.empty((masks.size, experts.dim))
    variances = np.empty_like(means)
    # uniform in-subset weights cancel in the ratio, so W_k = b b^T * S
    for start in range(0, masks.size, _MOHEL_CHUNK):
        b = member[start : start + _MOHEL_CHUNK]
        w = b[:, :, None] * b[:, None, :] * s[None, :, :]
        denom = w.sum(axis=(1, 2))[:, None]
        mean = np.einsum("kij,ijd->kd", w, mu) / denom
        spread = (mu[None, :, :, :] - mean[:, None, None, :]) ** 2 + var[None, :, :, :]
        means[start : start + _MOHEL_CHUNK] = mean
        variances[start : start + _MOHEL_CHUNK] = np.einsum("kij,kijd->kd", w, spread) / denom
    if not (np.isfinite(means).all() and np.isfinite(variances).all()):
        raise FloatingPointError("non-finite subset moments")
    return GaussianMixture._from_checked(means, np.maximum(variances, VARIANCE_FLOOR))


def wasserstein_barycenter(experts: ExpertSet) -> DiagonalGaussian:
    """2-Wasserstein barycenter of diagonal Gaussians.

    For commuting (here diagonal) covariances the barycenter's standard
    deviation is the weighted average of the expert standard deviations.
    """
    lam = experts.weights
    mean = lam @ experts.means
    std = lam @ np.sqrt(experts.variances)
    return DiagonalGaussian(mean, std**2)


@dataclass(frozen=True)
class PooledDensity:
    """An aggregated density that can be evaluated pointwise.

    ``kind`` is one of ``"moe"``, ``"holder"``, ``"poe-exact"`` or
    ``"hellinger-exact"``. Gaussian kinds and MoE are exactly normalised;
    Hoelder pools carry a normalisation estimate once :meth:`normalized`
    has been called.
    """

    kind: str
    source: ExpertSet
    alpha: float | None = None
    log_norm: float | None = None
    log_norm_se: float | None = None
    ess: float | None = None
    gaussian: DiagonalGaussian | None = None

    KINDS = ("moe", "holder", "poe-exact", "hellinger-exact")

    @classmethod
    def moe(cls, experts: ExpertSet) -> "PooledDensity":
        return cls("moe", experts, alpha=1.0, log_norm=0.0, log_norm_se=0.0)

    @classmethod
    def holder(cls, experts: ExpertSet, alpha: float) -> "PooledDensity":
        alpha = _check_alpha(alpha)
        if alpha == 1.0:
            # linear pool: already normalised
            return cls("holder", experts, alpha=1.0, log_norm=0.0, log_norm_se=0.0)
        return cls("holder", experts, alpha=alpha)

    @classmethod
    def poe(cls, experts: ExpertSet) -> "PooledDensity":
        return cls("poe-exact", experts, log_norm=0.0, log_norm_se=0.0, gaussian=poe_aggregate(experts))

    @classmethod
    def hellinger(cls, experts: ExpertSet) -> "PooledDensity":
        return cls("hellinger-exact", experts, log_norm=0.0, log_norm_se=0.0, gaussian=hellinger_aggregate(experts))

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def is_normalized(self) -> bool:
        return self.log_norm is not None

    def normalized(self, n: int, seed: SeedLike) -> "PooledDensity":
        """Copy carrying a normalisation estimate (no-op for exact kinds)."""
        if self.is_normalized:
            return self
        est = holder_normalize(self.source, self.alpha, n, seed)
        return replace(self, log_norm=est.log_norm, log_norm_se=est.std_err, ess=est.ess)

    def log_density_unnorm(self, z):
        if self.gaussian is not None:
            return self.gaussian.log_density(z)
        if self.kind == "moe":
            return moe_log_density(self.source, z)
        return holder_log_density_unnorm(self.source, self.alpha, z)

    def log_density(self, z):
        if not self.is_normalized:
            raise NotNormalizedError(
                "Hoelder pool has no normalisation estimate; call holder_normalize "
                "(or PooledDensity.normalized) first"
            )
        return self.log_density_unnorm(z) - self.log_norm

    def sample(self, n: int, seed: SeedLike) -> np.ndarray:
        if self.gaussian is not None:
            return self.gaussian.sample(n, seed)
        if self.kind == "moe" or self.alpha == 1.0:
            return moe_sample(self.source, n, seed)
        return holder_sample(self.source, self.alpha, n, seed)[0]
