"""Run configuration: TOML file plus command-line overrides, validated up front.

Every section and key is checked against a schema; unknown keys raise a
:class:`ConfigError` naming the offending key. Grids are tables
``{min, max, count, spacing}`` with ``spacing`` one of ``linear`` or ``log``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


MODEL_NAMES = ("gaussian_circle", "gaussian", "counterexample", "constant", "space_csv", "harmonic")
PSI_KINDS = ("natural", "sqrt_p", "const", "beta_b", "tabulated")
BOUND_SOURCES = ("entropy", "singletons", "partition", "exact")
TAIL_SOURCES = ("exact", "entropy", "quartic_log")

_NUM = (int, float)

SCHEMA = {
    "model": {
        "name": str, "n_points": int, "length_scale": _NUM, "sigma": _NUM,
        "beta": _NUM, "N": int, "base": str, "signed": bool, "scale": _NUM,
        "values": list, "b": _NUM, "cov_csv": str, "path": str,
    },
    "psi": {"kind": str, "b": _NUM, "value": _NUM, "beta": _NUM, "path": str},
    "grids": {"p": dict, "u": dict, "delta": dict, "x": dict},
    "constants": {"theta_prefactor": _NUM},
    "partition": {"budget": int, "seed": int, "file": str, "threshold": _NUM},
    "mc": {"paths": int, "seed": int, "alpha": _NUM, "bound_source": str,
           "bound_scale": _NUM, "strict": bool},
    "continuity": {"threshold": _NUM, "tail_source": str},
    "output": {"dir": str, "plots": bool},
}
GRID_KEYS = {"min": _NUM, "max": _NUM, "count": int, "spacing": str}

DEFAULTS = {
    "model": {"name": "gaussian_circle", "n_points": 32, "length_scale": 0.5, "sigma": 1.0,
              "beta": 1.0, "N": 256, "base": "power", "signed": False, "scale": 1.0},
    "psi": {"kind": "natural"},
    "grids": {
        "u": {"min": 0.5, "max": 100.0, "count": 60, "spacing": "log"},
        "delta": {"min": 1e-5, "max": 1.0, "count": 26, "spacing": "log"},
        "x": {"min": 0.0, "max": 5.0, "count": 51, "spacing": "linear"},
    },
    "constants": {"theta_prefactor": 9.0},
    "partition": {"budget": 200, "seed": 0, "threshold": 1e-3},
    "mc": {"paths": 100_000, "seed": 0, "alpha": 0.01, "bound_source": "entropy",
           "bound_scale": 1.0, "strict": False},
    "continuity": {"threshold": 1e-2, "tail_source": "exact"},
    "output": {"dir": "out", "plots": True},
}


def _check_type(key, value, typ):
    if typ is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, typ)
    if not ok:
        name = "number" if typ is _NUM else typ.__name__
        raise ConfigError(f"{key}: expected {name}, got {type(value).__name__}")


def validate_grid(key: str, spec) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{key}: grid must be a table {{min, max, count, spacing}}")
    for k, v in spec.items():
        if k not in GRID_KEYS:
            raise ConfigError(f"{key}.{k}: unknown key")
        _check_type(f"{key}.{k}", v, GRID_KEYS[k])
    missing = [k for k in GRID_KEYS if k not in spec]
    if missing:
        raise ConfigError(f"{key}: missing {', '.join(missing)}")
    if spec["spacing"] not in ("linear", "log"):
        raise ConfigError(f"{key}.spacing: must be 'linear' or 'log'")
    if spec["count"] < 1:
        raise ConfigError(f"{key}.count: must be >= 1")
    if not spec["min"] <= spec["max"] or (spec["count"] > 1 and spec["min"] == spec["max"]):
        raise ConfigError(f"{key}: need min < max")
    if spec["spacing"] == "log" and spec["min"] <= 0:
        raise ConfigError(f"{key}.min: log spacing needs min > 0")
    return dict(spec)


def make_grid(spec: dict) -> np.ndarray:
    lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["count"])
    if n == 1:
        return np.array([lo])
    return np.geomspace(lo, hi, n) if spec["spacing"] == "log" else np.linspace(lo, hi, n)


def parse_grid_flag(text: str) -> dict:
    """``min:max:count[:spacing]`` as used on the command line."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"grid flag {text!r}: expected min:max:count[:linear|log]")
    try:
        spec = {"min": float(parts[0]), "max": float(parts[1]), "count": int(parts[2]),
                "spacing": parts[3] if len(parts) == 4 else "linear"}
    except ValueError:
        raise ConfigError(f"grid flag {text!r}: bad number") from None
    return validate_grid("grid", spec)


def validate(raw: dict) -> dict:
    """Check keys and types, merge defaults; returns a new dict."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        if not isinstance(body, dict):
            raise ConfigError(f"{sec}: must be a table")
        for k, v in body.items():
            if k not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{k}: unknown key")
            _check_type(f"{sec}.{k}", v, SCHEMA[sec][k])
            if sec == "grids":
                validate_grid(f"grids.{k}", v)
    cfg = copy.deepcopy(DEFAULTS)
    for sec, body in raw.items():
        if sec == "grids":
            cfg["grids"].update(copy.deepcopy(body))
        else:
            cfg.setdefault(sec, {}).update(copy.deepcopy(body))
    _check_values(cfg)
    return cfg


def _check_values(cfg: dict):
    m = cfg["model"]
    if m["name"] not in MODEL_NAMES:
        raise ConfigError(f"model.name: unknown model {m['name']!r} (choose from {', '.join(MODEL_NAMES)})")
    if m["name"] in ("gaussian", "space_csv") and "cov_csv" not in m and "path" not in m:
        raise ConfigError(f"model.path: required for model {m['name']!r}")
    if m["name"] == "constant" and "values" not in m:
        raise ConfigError("model.values: required for the constant model")
    if m["N"] < 1:
        raise ConfigError("model.N: must be >= 1")
    if m["beta"] <= 0:
        raise ConfigError("model.beta: must be > 0")
    if m["scale"] <= 0:
        raise ConfigError("model.scale: must be > 0")
    if cfg["psi"]["kind"] not in PSI_KINDS:
        raise ConfigError(f"psi.kind: unknown kind {cfg['psi']['kind']!r}")
    mc = cfg["mc"]
    if mc["paths"] < 1:
        raise ConfigError("mc.paths: must be >= 1")
    if not 0 < mc["alpha"] < 1:
        raise ConfigError("mc.alpha: must lie in (0, 1)")
    if mc["bound_source"] not in BOUND_SOURCES:
        raise ConfigError(f"mc.bound_source: choose from {', '.join(BOUND_SOURCES)}")
    if mc["bound_scale"] < 0:
        raise ConfigError("mc.bound_scale: must be >= 0")
    if cfg["partition"]["budget"] <= 0:
        raise ConfigError("partition.budget: must be positive")
    if cfg["continuity"]["tail_source"] not in TAIL_SOURCES:
        raise ConfigError(f"continuity.tail_source: choose from {', '.join(TAIL_SOURCES)}")
    if cfg["constants"]["theta_prefactor"] <= 0:
        raise ConfigError("constants.theta_prefactor: must be > 0")


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return raw


def set_key(raw: dict, dotted: str, value):
    """Apply an override such as ``mc.seed`` to a raw (unvalidated) config."""
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: cannot set inside a non-table")
    node[parts[-1]] = value


def config_hash(cfg: dict) -> str:
    blob = json.dumps(jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj
