"""Run configuration: one JSON document, defaults merged in, unknown keys rejected."""

import copy
import hashlib
import json
import math
from pathlib import Path

from .exceptions import ConfigError

DEFAULTS = {
    "medium": {"V0": 10.0, "a_iso": 0.0, "a_aniso": 0.0, "offset": 0.0, "scale": 1.0,
               "file": None},
    "solver": {"M": 12, "nbands": 6, "deg_tol": 1e-8, "struct_tol": 1e-6, "vel_tol": 1e-8,
               "origin_search": True, "path_points": 30, "dirac": False,
               "cone_radii": [1e-3, 2e-3]},
    "strain": {"kind": "sinusoidal",
               "params": {"amplitude": 1.0, "direction": [0.0, 1.0],
                          "wavevector": [0.5, 0.0], "phase": 0.0},
               "flavor": "schrodinger", "curl": "fd4",
               "grid": {"L1": 24.0, "L2": 24.0, "N1": 64, "N2": 64},
               "dirac_point": None},
    "dynamics": {"gauge": "linear", "grid": {"L1": 40.0, "L2": 64.0, "N1": 256, "N2": 256},
                 "v": 1.0, "B0": 1.0, "r_c": 8.0, "w_c": 4.0, "dt": 0.01, "T": 4.0,
                 "stride": 100, "k0": 0.0, "w": 0.3, "n": 0, "sign": 1, "clip": None,
                 "nodes": 61, "commensurate": False, "control": True,
                 "snapshot_times": [0.0, 2.0, 4.0], "images": False,
                 "method": "strang"},
    "landau": {"grid": {"L1": 40.0, "L2": 8.0, "N1": 512, "N2": 1}, "v": 1.0, "B0": 1.0,
               "r_c": 8.0, "w_c": 4.0, "k": 0.0, "count": 9, "window": [-8.0, 8.0],
               "nmax": 4, "modes": [0, 1, 2, 3], "mode_grid": {"L1": 40.0, "L2": 8.0,
                                                               "N1": 256, "N2": 32}},
    "validation": {"epsilons": [0.1, 0.05], "rho": 2.0, "flavor": "schrodinger",
                   "ratio_window": [1.5, 2.6],
                   "envelope": {}},
    "expansion": {"epsilons": [0.1, 0.05, 0.025], "blocks": [9, 15], "points": [11, 7],
                  "width": 2.0, "ratio_window": [3.6, 4.4],
                  "deformation": {"kind": "sinusoidal",
                                  "params": {"amplitude": 1.0, "direction": [0.6, 0.8],
                                             "wavevector": [0.7, 0.4], "phase": 0.3}}},
    "output_dir": "out",
    "seed": 0,
}

# blocks whose contents are free-form dictionaries checked elsewhere
_OPEN = {("strain", "params"), ("validation", "envelope"), ("expansion", "deformation", "params")}

_RANGES = {
    ("medium", "scale"): (0.0, None, False),
    ("solver", "M"): (1, 64, True),
    ("solver", "nbands"): (1, 200, True),
    ("solver", "deg_tol"): (0.0, 1.0, False),
    ("solver", "struct_tol"): (0.0, 1.0, False),
    ("solver", "vel_tol"): (0.0, 1.0, False),
    ("solver", "path_points"): (2, 10000, True),
    ("dynamics", "v"): (0.0, None, False),
    ("dynamics", "dt"): (0.0, None, False),
    ("dynamics", "T"): (0.0, None, True),
    ("dynamics", "stride"): (1, None, True),
    ("dynamics", "w"): (0.0, None, False),
    ("dynamics", "n"): (0, 200, True),
    ("dynamics", "nodes"): (1, 10000, True),
    ("landau", "v"): (0.0, None, False),
    ("landau", "count"): (1, 10000, True),
    ("landau", "nmax"): (0, 200, True),
    ("validation", "rho"): (0.0, None, False),
    ("expansion", "width"): (0.0, None, False),
}

_CHOICES = {
    ("strain", "kind"): ("constant", "linear-gauge", "erf-gauge", "sinusoidal"),
    ("strain", "flavor"): ("schrodinger", "wave"),
    ("strain", "curl"): ("fd4", "spectral"),
    ("dynamics", "gauge"): ("linear", "erf", "free"),
    ("dynamics", "method"): ("strang", "rk4"),
    ("validation", "flavor"): ("schrodinger", "wave"),
}


def _merge(base, over, path):
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown configuration key {'.'.join(where)!r}", key=".".join(where))
        if isinstance(base[key], dict) and where not in _OPEN:
            if not isinstance(val, dict):
                raise ConfigError(f"{'.'.join(where)} must be an object", key=".".join(where))
            out[key] = _merge(base[key], val, where)
        elif where in _OPEN:
            if not isinstance(val, dict):
                raise ConfigError(f"{'.'.join(where)} must be an object", key=".".join(where))
            out[key] = copy.deepcopy(val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _get(cfg, path):
    for p in path:
        cfg = cfg[p]
    return cfg


def _check_number(val, key, lo, hi, closed):
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ConfigError(f"{key} must be a finite number, got {val!r}", key=key)
    if lo is not None and (val < lo or (not closed and val == lo)):
        raise ConfigError(f"{key}={val} is below its allowed range", key=key)
    if hi is not None and val > hi:
        raise ConfigError(f"{key}={val} is above its allowed range", key=key)


def validate(cfg):
    for path, (lo, hi, closed) in _RANGES.items():
        _check_number(_get(cfg, path), ".".join(path), lo, hi, closed)
    for path, choices in _CHOICES.items():
        val = _get(cfg, path)
        if val not in choices:
            raise ConfigError(f"{'.'.join(path)} must be one of {choices}, got {val!r}",
                              key=".".join(path))
    for block in ("medium",):
        for key in ("V0", "a_iso", "a_aniso", "offset"):
            _check_number(cfg[block][key], f"{block}.{key}", None, None, True)
    for gkey in (("strain", "grid"), ("dynamics", "grid"), ("landau", "grid"),
                 ("landau", "mode_grid")):
        g = _get(cfg, gkey)
        for k in ("L1", "L2"):
            _check_number(g[k], ".".join(gkey + (k,)), 0.0, None, False)
        for k in ("N1", "N2"):
            if not isinstance(g[k], int) or isinstance(g[k], bool) or g[k] < 1:
                raise ConfigError(f"{'.'.join(gkey + (k,))} must be a positive integer",
                                  key=".".join(gkey + (k,)))
    for key in (("validation", "epsilons"), ("expansion", "epsilons")):
        eps = _get(cfg, key)
        if not isinstance(eps, list) or not eps:
            raise ConfigError(f"{'.'.join(key)} must be a non-empty list", key=".".join(key))
        for e in eps:
            _check_number(e, ".".join(key), 0.0, 0.5, False)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0 or cfg["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
    env = cfg["validation"]["envelope"]
    from .continuum import ValidationSetup
    allowed = set(ValidationSetup.__dataclass_fields__)
    for k in env:
        if k not in allowed:
            raise ConfigError(f"unknown configuration key 'validation.envelope.{k}'",
                              key=f"validation.envelope.{k}")
    return cfg


def load_config(source=None, overrides=None):
    """Merged, validated config from a path, JSON text, dict or ``None`` (defaults)."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        text = Path(source).read_text(encoding="utf-8") if Path(str(source)).exists() else source
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", key="<document>") from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object", key="<document>")
    cfg = _merge(DEFAULTS, user, ())
    if overrides:
        cfg = _merge(DEFAULTS, _deep_update(cfg, overrides), ())
    return validate(cfg)


def _deep_update(a, b):
    out = copy.deepcopy(a)
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
