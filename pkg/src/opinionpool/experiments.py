"""Synthetic good/bad-expert studies.

A scenario pools ``n_good`` copies of a good expert and ``n_bad`` copies of a
bad one (good first) with every requested method, then scores each pooled
density against a known truth. Each (cell, method) pair draws from its own
seed, derived from the root seed and the cell coordinates, so rows do not
depend on execution order or on how many workers run the sweep.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from ._rng import derive_seed, make_rng, spawn
from .gaussian import DiagonalGaussian, ExpertSet, poe_aggregate
from .metrics import MetricReport, evaluate
from .pooling import GaussianMixture, PooledDensity, hellinger_aggregate, holder_moments, wasserstein_barycenter

METHODS = ("poe", "moe", "holder05", "hellinger", "wb")
FIGURE2_METHODS = ("poe", "moe", "holder05", "hellinger")

CSV_HEADER = (
    "n_good",
    "n_bad",
    "method",
    "nll",
    "nll_se",
    "bc",
    "bc_se",
    "sharpness",
    "sharpness_se",
    "n_samples",
    "seed",
)


def _good() -> DiagonalGaussian:
    return DiagonalGaussian([0.0, 0.0], [0.5, 0.5])


def _bad() -> DiagonalGaussian:
    return DiagonalGaussian([4.0, 4.0], [0.2, 0.2])


def _truth() -> DiagonalGaussian:
    return DiagonalGaussian([0.0, 0.0], [1.0, 1.0])


@dataclass(frozen=True)
class ScenarioConfig:
    n_good: int
    n_bad: int
    good_spec: DiagonalGaussian = field(default_factory=_good)
    bad_spec: DiagonalGaussian = field(default_factory=_bad)
    truth: DiagonalGaussian = field(default_factory=_truth)
    methods: tuple[str, ...] = FIGURE2_METHODS
    n_samples: int = 100_000
    seed: int = 0
    # std of Gaussian noise added to each expert mean; 0 keeps templates exact
    jitter: float = 0.0

    def __post_init__(self):
        if self.n_good < 0 or self.n_bad < 0 or self.n_good + self.n_bad < 1:
            raise ValueError(f"need at least one expert, got n_good={self.n_good}, n_bad={self.n_bad}")
        dims = {self.good_spec.dim, self.bad_spec.dim, self.truth.dim}
        if len(dims) != 1:
            raise ValueError(f"good, bad and truth dimensions differ: {sorted(dims)}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; valid ids: {', '.join(METHODS)}")
        object.__setattr__(self, "methods", tuple(self.methods))


class SweepRow(NamedTuple):
    n_good: int
    n_bad: int
    method: str
    report: MetricReport


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    provenance: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            r = row.report
            writer.writerow(
                [row.n_good, row.n_bad, row.method]
                + [f"{v:.9g}" for v in (r.nll, r.nll_se, r.bc, r.bc_se, r.sharpness, r.sharpness_se)]
                + [r.n_samples, r.seed]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [
            {
                "n_good": row.n_good,
                "n_bad": row.n_bad,
                "method": row.method,
                "nll": row.report.nll,
                "nll_se": row.report.nll_se,
                "bc": row.report.bc,
                "bc_se": row.report.bc_se,
                "bc_raw": row.report.bc_raw,
                "sharpness": row.report.sharpness,
                "sharpness_se": row.report.sharpness_se,
                "n_samples": row.report.n_samples,
                "seed": row.report.seed,
            }
            for row in self.rows
        ]
        return json.dumps({"provenance": self.provenance, "rows": rows}, indent=2) + "\n"

    def lookup(self, n_good: int, n_bad: int, method: str) -> MetricReport:
        for row in self.rows:
            if (row.n_good, row.n_bad, row.method) == (n_good, n_bad, method):
                return row.report
        raise KeyError((n_good, n_bad, method))


def build_experts(cfg: ScenarioConfig) -> ExpertSet:
    experts = [cfg.good_spec] * cfg.n_good + [cfg.bad_spec] * cfg.n_bad
    if cfg.jitter > 0:
        rng = make_rng(derive_seed(cfg.seed, cfg.n_good, cfg.n_bad, "jitter"))
        experts = [
            DiagonalGaussian(e.mean + cfg.jitter * rng.standard_normal(e.dim), e.variance) for e in experts
        ]
    return ExpertSet(experts)


def build_target(method: str, experts: ExpertSet, n: int, seed):
    """Pooled density for ``method``; Hoelder pools are normalised with ``seed``."""
    if method == "poe":
        return PooledDensity.poe(experts)
    if method == "moe":
        return PooledDensity.moe(experts)
    if method == "holder05":
        return PooledDensity.holder(experts, 0.5).normalized(n, seed)
    if method == "hellinger":
        return PooledDensity.hellinger(experts)
    if method == "wb":
        return wasserstein_barycenter(experts)
    raise ValueError(f"unknown method {method!r}; valid ids: {', '.join(METHODS)}")


def run_scenario(cfg: ScenarioConfig) -> list[tuple[str, MetricReport]]:
    experts = build_experts(cfg)
    out = []
    for method in cfg.methods:
        cell_seed = derive_seed(cfg.seed, cfg.n_good, cfg.n_bad, method)
        norm_seed, metric_seed = spawn(cell_seed, 2)
        target = build_target(method, experts, cfg.n_samples, norm_seed)
        report = evaluate(target, cfg.truth, cfg.n_samples, metric_seed)
        out.append((method, replace(report, seed=cell_seed)))
    return out


def _run_cell(cfg: ScenarioConfig) -> list[SweepRow]:
    return [SweepRow(cfg.n_good, cfg.n_bad, m, rep) for m, rep in run_scenario(cfg)]


def run_sweep(grid: Sequence[ScenarioConfig], jobs: int = 1) -> SweepResult:
    """Evaluate every cell of ``grid``; rows are sorted by (n_good, n_bad, method)."""
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, grid))
    else:
        cells = [_run_cell(cfg) for cfg in grid]
    rows = sorted((row for cell in cells for row in cell), key=lambda r: (r.n_good, r.n_bad, r.method))
    seeds = sorted({cfg.seed for cfg in grid})
    samples = sorted({cfg.n_samples for cfg in grid})
    provenance = {
        "seed": seeds[0] if len(seeds) == 1 else seeds,
        "n_samples": samples[0] if len(samples) == 1 else samples,
        "version": __version__,
    }
    return SweepResult(rows, provenance)


def figure2_grid(seed: int = 0, n_samples: int = 100_000) -> list[ScenarioConfig]:
    """Good experts 1..8 against two fixed bad experts."""
    return [
        ScenarioConfig(n_good=g, n_bad=2, methods=FIGURE2_METHODS, n_samples=n_samples, seed=seed)
        for g in range(1, 9)
    ]


def figure7_grid(seed: int = 0, n_samples: int = 100_000) -> list[ScenarioConfig]:
    """Good experts 1..8 against 0..3 bad experts, all five methods."""
    return [
        ScenarioConfig(n_good=g, n_bad=b, methods=METHODS, n_samples=n_samples, seed=seed)
        for b in range(4)
        for g in range(1, 9)
    ]


def build_figure1_scenario() -> ExpertSet:
    """Two agreeing experts and one sharp, distant expert in 2-D."""
    return ExpertSet(
        [
            DiagonalGaussian([0.0, 0.0], [0.5, 0.5]),
            DiagonalGaussian([1.0, 0.2], [0.6, 0.6]),
            DiagonalGaussian([4.0, 0.0], [0.2, 0.2]),
        ]
    )


FIGURE1_HEADER = ("method", "dim", "mean", "mean_se", "variance", "variance_se")


def figure1_summary(seed: int = 0, n_samples: int = 100_000) -> list[dict]:
    """Mean and variance of every pooled density on the three-expert example.

    Closed-form for poe, hellinger and wb; exact mixture moments for moe;
    importance-sampling moments (with standard errors) for holder05.
    """
    experts = build_figure1_scenario()
    rows = []

    def add(method, mean, var, mean_se=None, var_se=None):
        zeros = np.zeros_like(mean)
        mean_se = zeros if mean_se is None else mean_se
        var_se = zeros if var_se is None else var_se
        for d in range(mean.size):
            rows.append(
                {
                    "method": method,
                    "dim": d,
                    "mean": float(mean[d]),
                    "mean_se": float(mean_se[d]),
                    "variance": float(var[d]),
                    "variance_se": float(var_se[d]),
                }
            )

    g = poe_aggregate(experts)
    add("poe", g.mean, g.variance)
    mix = GaussianMixture.from_arrays(experts.means, experts.variances)
    add("moe", mix.mean(), mix.variance())
    hm = holder_moments(experts, 0.5, n_samples, derive_seed(seed, 3, 0, "holder05"))
    add("holder05", hm.mean, hm.variance, hm.mean_se, hm.variance_se)
    g = hellinger_aggregate(experts)
    add("hellinger", g.mean, g.variance)
    g = wasserstein_barycenter(experts)
    add("wb", g.mean, g.variance)
    return rows
