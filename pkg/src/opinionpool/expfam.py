"""Hellinger affinities and cross moments for exponential-family experts.

For members sharing base measure and sufficient statistics, ``sqrt(q_i q_j)``
is the midpoint member ``q_{eta_ij}`` (``eta_ij = (eta_i + eta_j) / 2``)
scaled by ``S_ij = exp(A(eta_ij) - A(eta_i)/2 - A(eta_j)/2)``. Its first and
second moments are therefore ``S_ij`` times those of the midpoint member.

Two families are registered: independent Gaussians per coordinate
(``"gaussian-diagonal"``) and independent exponentials per coordinate
(``"exponential"``). Adding a family means adding a :class:`Family` entry to
:data:`FAMILIES`; the affinity code does not change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gaussian import DiagonalGaussian


@dataclass(frozen=True)
class Family:
    """Descriptor of an exponential family with common support and base measure.

    ``log_partition``, ``mean`` and ``second_moment`` all take the natural
    parameter vector. ``second_moment`` returns ``E[z z^T]``.
    """

    name: str
    support: str
    in_domain: Callable[[np.ndarray], bool]
    log_partition: Callable[[np.ndarray], float]
    mean: Callable[[np.ndarray], np.ndarray]
    second_moment: Callable[[np.ndarray], np.ndarray]


def _gauss_split(eta):
    d = eta.size // 2
    return eta[:d], eta[d:]


def _gauss_domain(eta):
    if eta.size == 0 or eta.size % 2:
        return False
    return bool(np.all(_gauss_split(eta)[1] < 0))


def _gauss_log_partition(eta):
    # eta = (mu / var, -1 / (2 var)); base measure h(z) = 1
    e1, e2 = _gauss_split(eta)
    return float(np.sum(-e1 * e1 / (4.0 * e2) + 0.5 * np.log(math.pi / -e2)))


def _gauss_mean(eta):
    e1, e2 = _gauss_split(eta)
    return -e1 / (2.0 * e2)


def _gauss_second(eta):
    _, e2 = _gauss_split(eta)
    mu = _gauss_mean(eta)
    return np.outer(mu, mu) + np.diag(-1.0 / (2.0 * e2))


def _exp_mean(eta):
    return -1.0 / eta


def _exp_second(eta):
    mu = _exp_mean(eta)
    out = np.outer(mu, mu)
    # E[z^2] = 2 / rate^2 = 2 mu^2 on the diagonal
    np.fill_diagonal(out, 2.0 * mu * mu)
    return out


FAMILIES: dict[str, Family] = {
    "gaussian-diagonal": Family(
        name="gaussian-diagonal",
        support="real",
        in_domain=_gauss_domain,
        log_partition=_gauss_log_partition,
        mean=_gauss_mean,
        second_moment=_gauss_second,
    ),
    "exponential": Family(
        name="exponential",
        support="nonnegative",
        in_domain=lambda eta: eta.size > 0 and bool(np.all(eta < 0)),
        log_partition=lambda eta: float(np.sum(-np.log(-eta))),
        mean=_exp_mean,
        second_moment=_exp_second,
    ),
}


@dataclass(frozen=True, eq=False)
class ExpFamilyMember:
    """A member of a registered family, identified by natural parameters."""

    family_id: str
    natural_params: np.ndarray

    def __post_init__(self):
        if self.family_id not in FAMILIES:
            raise ValueError(f"unknown family {self.family_id!r}; known: {sorted(FAMILIES)}")
        eta = np.array(self.natural_params, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(eta)) or not FAMILIES[self.family_id].in_domain(eta):
            raise ValueError(f"natural parameters {eta.tolist()} are outside the {self.family_id} domain")
        eta.setflags(write=False)
        object.__setattr__(self, "natural_params", eta)

    @property
    def family(self) -> Family:
        return FAMILIES[self.family_id]

    @property
    def support_descriptor(self) -> str:
        return self.family.support

    @classmethod
    def from_gaussian(cls, g: DiagonalGaussian) -> "ExpFamilyMember":
        return cls("gaussian-diagonal", np.concatenate([g.mean / g.variance, -0.5 / g.variance]))

    @classmethod
    def exponential(cls, rates) -> "ExpFamilyMember":
        rates = np.atleast_1d(np.asarray(rates, dtype=np.float64))
        if np.any(rates <= 0):
            raise ValueError("exponential rates must be positive")
        return cls("exponential", -rates)


def log_partition(m: ExpFamilyMember) -> float:
    return m.family.log_partition(m.natural_params)


def _midpoint(a: ExpFamilyMember, b: ExpFamilyMember) -> np.ndarray:
    if a.family_id != b.family_id:
        raise ValueError(f"cannot pair members of different families: {a.family_id} vs {b.family_id}")
    if a.natural_params.shape != b.natural_params.shape:
        raise ValueError("members have different natural-parameter dimensions")
    return 0.5 * (a.natural_params + b.natural_params)


def expfam_log_affinity(a: ExpFamilyMember, b: ExpFamilyMember) -> float:
    eta_ij = _midpoint(a, b)
    fam = a.family
    # the halved sum is commutative in floating point, so swapping the pair is exact
    val = fam.log_partition(eta_ij) - 0.5 * (fam.log_partition(a.natural_params) + fam.log_partition(b.natural_params))
    # A is convex, so the midpoint value never exceeds the average
    return min(val, 0.0)


def expfam_affinity(a: ExpFamilyMember, b: ExpFamilyMember) -> float:
    """Hellinger affinity ``S_ij`` between two members of the same family."""
    return math.exp(expfam_log_affinity(a, b))


def expfam_cross_moments(a: ExpFamilyMember, b: ExpFamilyMember) -> tuple[np.ndarray, np.ndarray]:
    """First and second moments of ``sqrt(q_a q_b)``.

    Returns:
        ``(M_ij, V_ij)`` where ``M_ij = S_ij E[z]`` and
        ``V_ij = S_ij E[z z^T]`` under the midpoint member.
    """
    eta_ij = _midpoint(a, b)
    s = expfam_affinity(a, b)
    fam = a.family
    return s * fam.mean(eta_ij), s * fam.second_moment(eta_ij)
