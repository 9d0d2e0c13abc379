"""Run configuration: a JSON object validated before any computation starts."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MissingFile
from .geometry import Cube, InclusionShape, LShape, Sphere, VoxelMask

TOP_KEYS = {
    "geometry", "resolution", "eps_e", "eps_r", "allow_lossless", "sweep", "n_modes",
    "truncation", "seed", "cache_dir", "output_dir", "fields", "validate",
}
GEOMETRY_KEYS = {
    "cube": {"type", "half_side"},
    "lshape": {"type", "outer_half_side", "cut_lo", "cut_hi"},
    "sphere": {"type", "radius"},
    "voxel": {"type", "path"},
}
FIELD_NAMES = {f"{q}{k}" for q in "HJ" for k in (1, 2, 3)}


@dataclass(frozen=True)
class SweepSpec:
    lambda_min: float = 3.0
    lambda_max: float = 10.0
    steps: int = 200

    def as_range(self):
        return (self.lambda_min, self.lambda_max, self.steps)


@dataclass(frozen=True)
class FieldRequest:
    lambda_over_d: tuple = (7.5,)
    which: tuple = ("H3", "J3")


@dataclass(frozen=True)
class ValidateSpec:
    lambda_over_d: float = 7.5
    oracle_modes: int = 10


@dataclass(frozen=True)
class RunConfig:
    geometry: InclusionShape
    resolution: int = 32
    eps_e: float = 1.0
    eps_r: complex = 100 + 1j
    allow_lossless: bool = False
    sweep: SweepSpec = field(default_factory=SweepSpec)
    n_modes: int = 40
    n_max: int = 40
    strength_tol: float = 1e-6
    seed: int = 42
    cache_dir: str | None = None
    output_dir: str = "."
    fields: FieldRequest = field(default_factory=FieldRequest)
    validate: ValidateSpec = field(default_factory=ValidateSpec)


def _reject_unknown(obj: dict, allowed: set, where: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}{key}", "unknown key")


def _number(value, where, *, integer=False, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    if positive and not value > 0:
        raise ConfigError(where, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(where, "must be non-negative")
    return int(value) if integer else float(value)


def _geometry(obj, base=None) -> InclusionShape:
    if not isinstance(obj, dict):
        raise ConfigError("geometry", "expected an object")
    kind = obj.get("type")
    if kind not in GEOMETRY_KEYS:
        raise ConfigError("geometry.type", f"unknown geometry type {kind!r}")
    _reject_unknown(obj, GEOMETRY_KEYS[kind], "geometry.")
    if kind == "cube":
        a = _number(obj.get("half_side"), "geometry.half_side", positive=True)
        if a >= 0.5:
            raise ConfigError("geometry.half_side", "must be < 0.5 (inclusion inside the cell)")
        return Cube(a)
    if kind == "sphere":
        r = _number(obj.get("radius"), "geometry.radius", positive=True)
        if r >= 0.5:
            raise ConfigError("geometry.radius", "must be < 0.5 (inclusion inside the cell)")
        return Sphere(r)
    if kind == "lshape":
        outer = _number(obj.get("outer_half_side", 0.3), "geometry.outer_half_side", positive=True)
        bounds = []
        for key, default in (("cut_lo", (-0.3, -0.3, None)), ("cut_hi", (0.1, 0.1, None))):
            vals = obj.get(key, list(default))
            if not isinstance(vals, list) or len(vals) != 3:
                raise ConfigError(f"geometry.{key}", "expected a list of three numbers or nulls")
            bounds.append(tuple(None if v is None else _number(v, f"geometry.{key}") for v in vals))
        return LShape(outer, bounds[0], bounds[1])
    path = obj.get("path")
    if not isinstance(path, str):
        raise ConfigError("geometry.path", "expected a file path")
    if base is not None and not Path(path).is_absolute():
        path = str(Path(base) / path)
    if not Path(path).is_file():
        raise ConfigError("geometry.path", f"file not found: {path}")
    return VoxelMask(path=path)


def config_from_dict(raw: dict, base=None) -> RunConfig:
    """Validate a parsed config; relative voxel paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    _reject_unknown(raw, TOP_KEYS, "")
    if "geometry" not in raw:
        raise ConfigError("geometry", "required")
    kw = {"geometry": _geometry(raw["geometry"], base)}

    if "resolution" in raw:
        n = _number(raw["resolution"], "resolution", integer=True)
        if n < 4:
            raise ConfigError("resolution", "must be >= 4")
        kw["resolution"] = n
    if "eps_e" in raw:
        kw["eps_e"] = _number(raw["eps_e"], "eps_e", positive=True)

    if "allow_lossless" in raw:
        if not isinstance(raw["allow_lossless"], bool):
            raise ConfigError("allow_lossless", "expected true or false")
        kw["allow_lossless"] = raw["allow_lossless"]
    if "eps_r" in raw:
        er = raw["eps_r"]
        if not isinstance(er, list) or len(er) != 2:
            raise ConfigError("eps_r", "expected [re, im]")
        re = _number(er[0], "eps_r[0]", positive=True)
        im = _number(er[1], "eps_r[1]")
        if im < 0:
            raise ConfigError("eps_r[1]", "Im(eps_r) must be >= 0 (dissipative inclusion)")
        if im == 0 and not kw.get("allow_lossless", False):
            raise ConfigError("eps_r[1]", "Im(eps_r) = 0 requires allow_lossless: true")
        kw["eps_r"] = complex(re, im)

    if "sweep" in raw:
        sw = raw["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("sweep", "expected an object")
        _reject_unknown(sw, {"lambda_min", "lambda_max", "steps"}, "sweep.")
        lo = _number(sw.get("lambda_min", 3.0), "sweep.lambda_min", positive=True)
        hi = _number(sw.get("lambda_max", 10.0), "sweep.lambda_max", positive=True)
        steps = _number(sw.get("steps", 200), "sweep.steps", integer=True)
        if hi <= lo:
            raise ConfigError("sweep.lambda_max", "must exceed lambda_min")
        if steps < 2:
            raise ConfigError("sweep.steps", "must be >= 2")
        kw["sweep"] = SweepSpec(lo, hi, steps)

    if "n_modes" in raw:
        kw["n_modes"] = _number(raw["n_modes"], "n_modes", integer=True)
        if kw["n_modes"] < 1:
            raise ConfigError("n_modes", "must be >= 1")
    if "truncation" in raw:
        tr = raw["truncation"]
        if not isinstance(tr, dict):
            raise ConfigError("truncation", "expected an object")
        _reject_unknown(tr, {"N_max", "strength_tol"}, "truncation.")
        if "N_max" in tr:
            kw["n_max"] = _number(tr["N_max"], "truncation.N_max", integer=True)
            if kw["n_max"] < 1:
                raise ConfigError("truncation.N_max", "must be >= 1")
        if "strength_tol" in tr:
            tol = _number(tr["strength_tol"], "truncation.strength_tol", nonneg=True)
            if tol >= 1:
                raise ConfigError("truncation.strength_tol", "must be < 1")
            kw["strength_tol"] = tol
    if "seed" in raw:
        kw["seed"] = _number(raw["seed"], "seed", integer=True, nonneg=True)
    for key in ("cache_dir", "output_dir"):
        if key in raw:
            if raw[key] is not None and not isinstance(raw[key], str):
                raise ConfigError(key, "expected a directory path")
            if raw[key] is not None:
                kw[key] = raw[key]

    if "fields" in raw:
        fr = raw["fields"]
        if not isinstance(fr, dict):
            raise ConfigError("fields", "expected an object")
        _reject_unknown(fr, {"lambda_over_d", "which"}, "fields.")
        lods = fr.get("lambda_over_d", [7.5])
        if not isinstance(lods, list) or not lods:
            raise ConfigError("fields.lambda_over_d", "expected a non-empty list")
        lods = tuple(_number(v, "fields.lambda_over_d", positive=True) for v in lods)
        which = fr.get("which", ["H3", "J3"])
        if not isinstance(which, list) or not which or any(w not in FIELD_NAMES for w in which):
            raise ConfigError("fields.which", f"expected a non-empty list drawn from {sorted(FIELD_NAMES)}")
        kw["fields"] = FieldRequest(lods, tuple(which))
    if "validate" in raw:
        va = raw["validate"]
        if not isinstance(va, dict):
            raise ConfigError("validate", "expected an object")
        _reject_unknown(va, {"lambda_over_d", "oracle_modes"}, "validate.")
        lod = _number(va.get("lambda_over_d", 7.5), "validate.lambda_over_d", positive=True)
        om = _number(va.get("oracle_modes", 10), "validate.oracle_modes", integer=True)
        if om < 1:
            raise ConfigError("validate.oracle_modes", "must be >= 1")
        kw["validate"] = ValidateSpec(lod, om)
    return RunConfig(**kw)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(str(path))
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return config_from_dict(raw, base=p.parent)
