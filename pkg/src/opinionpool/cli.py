"""Command-line driver.

Exit codes: 0 success, 2 usage or config error, 3 output I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import __version__
from .experiments import (
    FIGURE1_HEADER,
    METHODS,
    ScenarioConfig,
    figure1_summary,
    figure2_grid,
    figure7_grid,
    run_sweep,
)
from .gaussian import DimensionMismatch
from .io import (
    ConfigError,
    dumps_json,
    gaussian_from_dict,
    gaussian_to_dict,
    load_expert_set,
    parse_json,
    rows_to_csv,
    run_manifest,
)
from .metrics import estimate_alpha_divergence
from .pooling import (
    GaussianMixture,
    hellinger_aggregate,
    hellinger_normalizer,
    holder_normalize,
    mohel_aggregate,
    poe_aggregate,
    wasserstein_barycenter,
)

POOL_METHODS = ("poe", "moe", "holder05", "hellinger", "mohel", "wb")
PRESETS = ("figure1", "figure2", "figure7")
SEED_ENV = "OPINIONPOOL_SEED"

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(Exception):
    pass


class OutputError(Exception):
    pass


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        if seed < 0:
            raise UsageError("--seed must be non-negative")
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        value = int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    if value < 0:
        raise UsageError(f"{SEED_ENV} must be non-negative")
    return value


def _parse_weights(values):
    if values is None:
        return None
    out = []
    for v in values:
        for part in v.split(","):
            if part.strip():
                try:
                    out.append(float(part))
                except ValueError:
                    raise UsageError(f"invalid weight {part!r}") from None
    return out


def _read_config(path: str, weights=None):
    try:
        return load_expert_set(path, weights)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc


def _write(path: str, text: str, manifest: dict):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(dumps_json(manifest))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _pool_payload(method, experts, samples, seed) -> dict:
    if method in ("poe", "hellinger", "wb"):
        fn = {"poe": poe_aggregate, "hellinger": hellinger_aggregate, "wb": wasserstein_barycenter}[method]
        g = fn(experts)
        return {
            "method": method,
            "kind": "gaussian",
            "mean": g.mean.tolist(),
            "variance": g.variance.tolist(),
            "experts": [gaussian_to_dict(g)],
            "weights": [1.0],
        }
    if method in ("moe", "mohel"):
        mix = GaussianMixture(experts.experts, experts.weights) if method == "moe" else mohel_aggregate(experts)
        return {
            "method": method,
            "kind": "mixture",
            "experts": [gaussian_to_dict(e) for e in mix],
            "weights": mix.weights.tolist(),
        }
    est = holder_normalize(experts, 0.5, samples, seed)
    return {
        "method": method,
        "kind": "holder",
        "alpha": 0.5,
        "experts": [gaussian_to_dict(e) for e in experts],
        "weights": experts.weights.tolist(),
        "log_norm": est.log_norm,
        "log_norm_se": est.std_err,
        "log_norm_closed_form": math.log(hellinger_normalizer(experts)),
        "ess": est.ess,
        "low_ess": est.low_ess,
        "n_samples": samples,
        "seed": seed,
    }


def _pool_csv(payload: dict) -> str:
    header = ("kind", "component", "weight", "dim", "mean", "variance", "log_norm", "log_norm_se")
    log_norm = payload.get("log_norm", 0.0)
    log_norm_se = payload.get("log_norm_se", 0.0)
    rows = []
    for k, (comp, w) in enumerate(zip(payload["experts"], payload["weights"])):
        for d, (m, v) in enumerate(zip(comp["mean"], comp["variance"])):
            rows.append((payload["kind"], k, float(w), d, float(m), float(v), float(log_norm), float(log_norm_se)))
    return rows_to_csv(header, rows)


def cmd_pool(args) -> int:
    if args.method not in POOL_METHODS:
        raise UsageError(f"unknown method {args.method!r}; valid: {', '.join(POOL_METHODS)}")
    if args.samples < 100:
        raise UsageError("--samples must be at least 100")
    seed = _resolve_seed(args.seed)
    weights = _parse_weights(args.weights)
    experts, obj = _read_config(args.config, weights)
    payload = _pool_payload(args.method, experts, args.samples, seed)
    text = dumps_json(payload) if args.format == "json" else _pool_csv(payload)
    manifest_cfg = {"config": obj, "method": args.method, "weights": weights, "samples": args.samples}
    _write(args.output, text, run_manifest("pool", manifest_cfg, seed))
    return EXIT_OK


def _sweep_grid_from_config(obj, seed: int, samples: int | None):
    if not isinstance(obj, dict):
        raise ConfigError("sweep config must be a JSON object")

    def int_list(key, default):
        val = obj.get(key, default)
        if isinstance(val, int) and not isinstance(val, bool):
            val = [val]
        if not isinstance(val, list) or not val or not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
            raise ConfigError(f"'{key}' must be an integer or a non-empty list of integers")
        return val

    kwargs = {}
    for key, field_name in (("good", "good_spec"), ("bad", "bad_spec"), ("truth", "truth")):
        if key in obj:
            kwargs[field_name] = gaussian_from_dict(obj[key], key)
    methods = obj.get("methods", list(METHODS))
    if not isinstance(methods, list) or not all(isinstance(m, str) for m in methods):
        raise ConfigError("'methods' must be a list of method ids")
    n = samples if samples is not None else obj.get("n_samples", 100_000)
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigError("'n_samples' must be an integer")
    if n < 100:
        raise ConfigError("'n_samples' must be at least 100")
    jitter = obj.get("jitter", 0.0)
    grid = []
    for b in int_list("n_bad", [2]):
        for g in int_list("n_good", list(range(1, 9))):
            try:
                grid.append(
                    ScenarioConfig(
                        n_good=g, n_bad=b, methods=tuple(methods), n_samples=n, seed=seed, jitter=float(jitter), **kwargs
                    )
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    return grid


def cmd_experiment(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.samples is not None and args.samples < 100:
        raise UsageError("--samples must be at least 100")
    if args.jobs is not None and args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    jobs = args.jobs or os.cpu_count() or 1
    samples = args.samples
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; valid: {', '.join(PRESETS)}")
        n = samples or 100_000
        manifest_cfg = {"preset": args.preset, "n_samples": n, "seed": seed}
        if args.preset == "figure1":
            rows = figure1_summary(seed, n)
            if args.format == "json":
                text = dumps_json({"provenance": {"seed": seed, "n_samples": n, "version": __version__}, "rows": rows})
            else:
                text = rows_to_csv(FIGURE1_HEADER, [tuple(r[k] for k in FIGURE1_HEADER) for r in rows])
            _write(args.output, text, run_manifest("experiment", manifest_cfg, seed))
            return EXIT_OK
        grid = (figure2_grid if args.preset == "figure2" else figure7_grid)(seed, n)
    else:
        try:
            with open(args.config, encoding="utf-8") as fh:
                obj = parse_json(fh.read(), args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        grid = _sweep_grid_from_config(obj, seed, samples)
        manifest_cfg = {"config": obj, "n_samples": grid[0].n_samples, "seed": seed}
    result = run_sweep(grid, jobs=jobs)
    text = result.to_json() if args.format == "json" else result.to_csv()
    _write(args.output, text, run_manifest("experiment", manifest_cfg, seed))
    return EXIT_OK


def cmd_divergence(args) -> int:
    if not (0.0 < args.alpha < 1.0):
        raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if args.samples < 100:
        raise UsageError("--samples must be at least 100")
    seed = _resolve_seed(args.seed)
    experts, _ = _read_config(args.config)
    if experts.size != 2:
        raise UsageError(f"divergence needs exactly 2 experts, config has {experts.size}")
    est = estimate_alpha_divergence(experts[0], experts[1], args.alpha, args.samples, seed)
    out = {
        "estimate": est.value,
        "std_err": est.std_err,
        "alpha": args.alpha,
        "n_samples": args.samples,
        "seed": seed,
    }
    sys.stdout.write(json.dumps(out) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opinionpool", description="Opinion pooling of Gaussian experts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pool", help="aggregate an expert set")
    p.add_argument("config", help="expert-set JSON file")
    p.add_argument("--method", required=True, help=f"one of {', '.join(POOL_METHODS)}")
    p.add_argument("--weights", nargs="+", help="pooling weights (space or comma separated)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--samples", type=int, default=100_000, help="IS samples for holder05 normalisation")
    p.add_argument("--seed", type=int, default=None, help=f"root seed (default: ${SEED_ENV} or 0)")
    p.set_defaults(func=cmd_pool)

    e = sub.add_parser("experiment", help="run a synthetic good/bad-expert sweep")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    src.add_argument("--config", help="sweep config JSON file")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--seed", type=int, default=None, help=f"root seed (default: ${SEED_ENV} or 0)")
    e.add_argument("--samples", type=int, default=None, help="MC samples per metric (default 100000)")
    e.add_argument("--jobs", type=int, default=None, help="parallel cells (default: CPU count)")
    e.set_defaults(func=cmd_experiment)

    d = sub.add_parser("divergence", help="alpha-divergence D(p || phi) between two Gaussians")
    d.add_argument("config", help="JSON file holding exactly two experts: p then phi")
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--samples", type=int, default=100_000)
    d.add_argument("--seed", type=int, default=None)
    d.set_defaults(func=cmd_divergence)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DimensionMismatch) as exc:
        print(f"opinionpool: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OutputError as exc:
        print(f"opinionpool: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
