"""Monte-Carlo evaluation of pooled densities against a known truth.

All estimators return a ``(value, std_err)`` pair and are pure functions of
their inputs, sample count, and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from ._rng import SeedLike, make_rng, spawn
from .gaussian import DiagonalGaussian, ExpertSet
from .pooling import (
    GaussianMixture,
    PooledDensity,
    _logsumexp_rows,
    holder_sample,
    moe_sample,
)

Target = Union[DiagonalGaussian, GaussianMixture, PooledDensity]

DEFAULT_SAMPLES = 100_000


class Estimate(NamedTuple):
    value: float
    std_err: float


class BCEstimate(NamedTuple):
    value: float
    std_err: float
    raw: float


@dataclass(frozen=True)
class MetricReport:
    """NLL, Bhattacharyya coefficient to the truth, and sharpness for one target."""

    nll: float
    nll_se: float
    bc: float
    bc_se: float
    bc_raw: float
    sharpness: float
    sharpness_se: float
    n_samples: int
    seed: int


def _check_n(n: int, minimum: int = 100):
    if n < minimum:
        raise ValueError(f"need at least {minimum} samples, got {n}")


def _log_q(target: Target, z: np.ndarray) -> np.ndarray:
    # PooledDensity.log_density raises NotNormalizedError for bare Hoelder pools
    return np.asarray(target.log_density(z))


def gaussian_entropy(g: DiagonalGaussian) -> float:
    return 0.5 * float(np.sum(np.log(2.0 * math.pi * math.e * g.variance)))


def mc_nll(target: Target, truth: DiagonalGaussian, n: int = DEFAULT_SAMPLES, seed: SeedLike = 0) -> Estimate:
    """Expected negative log-likelihood of ``target`` under draws from ``truth``."""
    _check_n(n)
    z = truth.sample(n, seed)
    nll = -_log_q(target, z)
    return Estimate(float(np.mean(nll)), float(np.std(nll, ddof=1) / math.sqrt(n)))


def mc_bhattacharyya(target: Target, truth: DiagonalGaussian, n: int = DEFAULT_SAMPLES, seed: SeedLike = 0) -> BCEstimate:
    """Bhattacharyya coefficient ``int sqrt(q p)`` as ``E_p[sqrt(q / p)]``.

    The reported value is clamped to [0, 1]; ``raw`` keeps the unclamped mean.
    """
    _check_n(n)
    z = truth.sample(n, seed)
    r = np.exp(0.5 * (_log_q(target, z) - truth.log_density(z)))
    raw = float(np.mean(r))
    # E_p[q/p] = int q = 1 for a normalised target, so Var = 1 - BC^2 exactly;
    # the sample variance misses it when the overlap region is rarely hit
    var = max(1.0 - raw * raw, float(np.var(r, ddof=1)))
    return BCEstimate(min(max(raw, 0.0), 1.0), math.sqrt(var / n), raw)


def _trace_cov(z: np.ndarray, n_eff: float) -> Estimate:
    t = np.sum((z - z.mean(axis=0)) ** 2, axis=1)
    n = z.shape[0]
    value = float(t.sum() / (n - 1))
    return Estimate(value, float(np.std(t, ddof=1) / math.sqrt(n_eff)))


def sharpness(target: Target, n: int | None = None, seed: SeedLike | None = None) -> Estimate:
    """Trace of the covariance.

    Gaussians (including exact pooled kinds) use the closed form with zero
    error. Mixtures and Hoelder pools use the empirical covariance of ``n``
    draws; Hoelder draws come from importance resampling and their standard
    error is scaled by the effective sample size.
    """
    if isinstance(target, PooledDensity) and target.gaussian is not None:
        target = target.gaussian
    if isinstance(target, DiagonalGaussian):
        return Estimate(target.trace_covariance(), 0.0)
    if n is None or seed is None:
        raise ValueError("sampled sharpness needs both n and seed")
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if isinstance(target, PooledDensity) and target.kind == "holder" and target.alpha != 1.0:
        z, ess = holder_sample(target.source, target.alpha, n, seed)
        return _trace_cov(z, ess)
    source = target.source if isinstance(target, PooledDensity) else target
    return _trace_cov(moe_sample(source, n, seed), n)


def _check_open_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def estimate_alpha_divergence(
    p: DiagonalGaussian, phi: DiagonalGaussian, alpha: float, n: int = DEFAULT_SAMPLES, seed: SeedLike = 0
) -> Estimate:
    """Monte-Carlo alpha-divergence ``E_phi[(p/phi)**alpha - 1] / (alpha (alpha - 1))``.

    Draws come from ``phi``. The ratio ``p/phi`` has expectation exactly one
    under ``phi`` and serves as a control variate, which keeps the error
    bounded as ``alpha`` approaches 1.
    """
    alpha = _check_open_alpha(alpha)
    _check_n(n)
    if p.dim != phi.dim:
        raise ValueError(f"dimensions differ: {p.dim} vs {phi.dim}")
    z = phi.sample(n, seed)
    log_r = p.log_density(z) - phi.log_density(z)
    g, r = np.exp(alpha * log_r), np.exp(log_r)
    # control variate: E_phi[p/phi] = 1 exactly; least-squares coefficient
    rc = r - r.mean()
    denom = float(rc @ rc)
    beta = float((g - g.mean()) @ rc) / denom if denom > 0 else 0.0
    f = (g - beta * (r - 1.0) - 1.0) / (alpha * (alpha - 1.0))
    return Estimate(float(np.mean(f)), float(np.std(f, ddof=1) / math.sqrt(n)))


def alpha_objective(
    experts: ExpertSet,
    candidate: DiagonalGaussian | PooledDensity,
    alpha: float,
    n: int = DEFAULT_SAMPLES,
    seed: SeedLike = 0,
) -> Estimate:
    """Pooling objective ``sum_j lambda_j D_alpha(q_j || candidate)``.

    Each ``int q_j**alpha phi**(1-alpha)`` is estimated by importance sampling.
    Gaussian candidates use a defensive proposal (half the uniform mixture of
    experts, half the candidate); a normalised Hoelder pool of the same
    experts uses the mixture alone, which dominates it. For a pool, the
    uncertainty of its normalisation estimate is propagated into the error.
    """
    alpha = _check_open_alpha(alpha)
    _check_n(n)
    proposal = experts.uniform()
    is_pool = isinstance(candidate, PooledDensity)
    if is_pool and candidate.gaussian is not None:
        candidate, is_pool = candidate.gaussian, False
    if is_pool:
        z = moe_sample(proposal, n, seed)
        lq = proposal.component_log_densities(z)
        log_r = _logsumexp_rows(lq) - math.log(proposal.size)
    else:
        choose, draws_a, draws_b = spawn(seed, 3)
        pick = make_rng(choose).random(n) < 0.5
        z = np.where(pick[:, None], moe_sample(proposal, n, draws_a), candidate.sample(n, draws_b))
        lq = proposal.component_log_densities(z)
        log_moe = _logsumexp_rows(lq) - math.log(proposal.size)
        log_r = np.logaddexp(log_moe, candidate.log_density(z)) - math.log(2.0)
    log_phi = np.asarray(candidate.log_density(z))
    ratios = np.exp(alpha * lq + (1.0 - alpha) * log_phi[:, None] - log_r[:, None])
    scale = 1.0 / (alpha * (alpha - 1.0))
    f = scale * (ratios @ experts.weights - 1.0)
    value = float(np.mean(f))
    var = float(np.var(f, ddof=1)) / n
    if is_pool and candidate.log_norm_se:
        # d/d(log c) of the objective is (1 - alpha) * scale * sum_j lambda_j I_j
        grad = (1.0 - alpha) * scale * float(np.mean(ratios @ experts.weights))
        var += (grad * candidate.log_norm_se) ** 2
    return Estimate(value, math.sqrt(var))


def evaluate(target: Target, truth: DiagonalGaussian, n: int, seed: SeedLike) -> MetricReport:
    """NLL, BC and sharpness with independent child streams of ``seed``."""
    nll_seed, bc_seed, sharp_seed = spawn(seed, 3)
    nll = mc_nll(target, truth, n, nll_seed)
    bc = mc_bhattacharyya(target, truth, n, bc_seed)
    sharp = sharpness(target, n, sharp_seed)
    return MetricReport(
        nll=nll.value,
        nll_se=nll.std_err,
        bc=bc.value,
        bc_se=bc.std_err,
        bc_raw=bc.raw,
        sharpness=sharp.value,
        sharpness_se=sharp.std_err,
        n_samples=n,
        seed=int(seed) if not isinstance(seed, np.random.SeedSequence) else int(seed.entropy),
    )
