"""JSON config parsing and output serialisation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import datetime, timezone

from . import __version__
from .gaussian import DiagonalGaussian, ExpertSet


class ConfigError(ValueError):
    """Malformed or semantically invalid input config."""


def parse_json(text: str, source: str = "<config>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _number_list(value, what: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{what} must be a non-empty list of numbers")
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{what} must contain only numbers, found {v!r}")
    return [float(v) for v in value]


def gaussian_from_dict(obj, what: str = "expert") -> DiagonalGaussian:
    if not isinstance(obj, dict) or "mean" not in obj or "variance" not in obj:
        raise ConfigError(f"{what} must be an object with 'mean' and 'variance'")
    mean = _number_list(obj["mean"], f"{what}.mean")
    var = _number_list(obj["variance"], f"{what}.variance")
    if len(mean) != len(var):
        raise ConfigError(f"{what}: mean has length {len(mean)} but variance has length {len(var)}")
    if any(v <= 0 for v in var):
        raise ConfigError(f"{what}: variances must be positive")
    return DiagonalGaussian(mean, var)


def gaussian_to_dict(g: DiagonalGaussian) -> dict:
    return {"mean": g.mean.tolist(), "variance": g.variance.tolist()}


def expert_set_from_obj(obj, weights_override=None) -> ExpertSet:
    """Build an :class:`ExpertSet` from ``{"experts": [...], "weights": [...]?}``.

    Unknown top-level keys are ignored, so aggregate files written by the
    ``pool`` command parse back as expert sets.
    """
    if not isinstance(obj, dict) or "experts" not in obj:
        raise ConfigError("config must be an object with an 'experts' list")
    raw = obj["experts"]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("'experts' must be a non-empty list")
    experts = [gaussian_from_dict(e, f"experts[{i}]") for i, e in enumerate(raw)]
    dims = {e.dim for e in experts}
    if len(dims) != 1:
        raise ConfigError(f"dimension mismatch: experts have dimensions {sorted(dims)}")
    weights = weights_override if weights_override is not None else obj.get("weights")
    if weights is not None:
        weights = _number_list(weights, "weights")
    try:
        return ExpertSet(experts, weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_expert_set(path: str, weights_override=None) -> tuple[ExpertSet, dict]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    obj = parse_json(text, path)
    return expert_set_from_obj(obj, weights_override), obj


def config_digest(obj) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_manifest(command: str, config_obj, root_seed: int) -> dict:
    return {
        "command": command,
        "config_digest": config_digest(config_obj),
        "root_seed": int(root_seed),
        "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }


def dumps_json(obj) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()
