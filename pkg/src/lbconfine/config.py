"""Run configuration: nested TOML tables, strictly validated, defaults filled."""

from __future__ import annotations

import copy
import difflib
import json
import os
from dataclasses import dataclass
from typing import Any, Dict

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from . import potential as pot


class ConfigError(ValueError):
    pass


POTENTIAL_KEYS = {"preset", "form", "beta", "alpha", "betas", "alphas", "terms", "C"}

# (default, type, constraint) per key; constraint is a (predicate, message) pair or None
POSITIVE = (lambda v: v > 0, "must be > 0")
AT_LEAST_2 = (lambda v: v >= 2, "must be >= 2")
NONNEG = (lambda v: v >= 0, "must be >= 0")

SCHEMA: Dict[str, Dict[str, tuple]] = {
    "": {
        "n": (2, int, (lambda v: v in (2, 3), "must be 2 or 3")),
        "seed": (0, int, NONNEG),
        "threads": (0, int, (lambda v: v >= 0, "must be >= 0 (0 = library default)")),
    },
    "grid": {
        "spatial": (32, int, AT_LEAST_2),
        "velocity": (24, int, AT_LEAST_2),
        "R_xi": (6.0, float, POSITIVE),
        "interp_order": (3, int, (lambda v: v >= 1 and v % 2 == 1, "must be an odd integer >= 1")),
        "nodes_per_panel": (8, int, AT_LEAST_2),
        "hermite_nodes": (16, int, AT_LEAST_2),
    },
    "collision": {
        "gamma": (0.0, float, NONNEG),
        "q0": (1.0, float, POSITIVE),
        "n_angle": (12, int, AT_LEAST_2),
        "enabled": (True, bool, None),
    },
    "time": {
        "dt": (0.01, float, POSITIVE),
        "T": (10.0, float, POSITIVE),
        "output_interval": (0.1, float, POSITIVE),
    },
    "simulation": {
        "force": (True, bool, None),
        "periodic": (False, bool, None),
        "initial": ("bump", str, (lambda v: v in ("bump", "zero"), "must be 'bump' or 'zero'")),
        "amplitude": (0.5, float, None),
        "center": ([0.15, -0.1, 0.05], list, None),
        "width": (0.25, float, POSITIVE),
        "cfl_max": (4.0, float, POSITIVE),
        "allow_inadmissible": (False, bool, None),
    },
    "tolerances": {
        "gram_dependent": (1e-8, float, POSITIVE),
        "gram_independent": (1e-6, float, POSITIVE),
        "constancy": (1e-6, float, POSITIVE),
        "limit": (0.05, float, POSITIVE),
        "mass_drift": (1e-6, float, POSITIVE),
        "energy_drift": (1e-5, float, POSITIVE),
        "angular_drift": (1e-5, float, POSITIVE),
        "boundary_loss": (1e-6, float, POSITIVE),
        "fit_discard": (0.2, float, (lambda v: 0 <= v < 1, "must lie in [0, 1)")),
        "fit_residual": (0.05, float, POSITIVE),
    },
    "output": {
        "dir": ("out", str, None),
        "cache_dir": ("", str, None),
    },
}

DEFAULT_POTENTIAL = {"preset": "phi1", "beta": 8.0, "alpha": 1.0}


@dataclass(frozen=True)
class RunConfig:
    data: Dict[str, Any]

    def __getitem__(self, key):
        return self.data[key]

    @property
    def n(self) -> int:
        return self.data["n"]

    def section(self, name: str) -> Dict[str, Any]:
        return self.data[name]

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)

    def echo(self, directory: str, name: str = "config.resolved.json") -> str:
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def build_potential(self, normalized: bool = True) -> pot.Potential:
        spec = dict(self.data["potential"], n=self.n)
        phi = pot.from_dict(spec)
        return pot.normalize(phi, self.data["grid"]["nodes_per_panel"]) if normalized else phi


def _unknown(path: str, key: str, allowed) -> ConfigError:
    full = f"{path}.{key}" if path else key
    hint = difflib.get_close_matches(key, list(allowed), n=1)
    msg = f"unknown key `{full}`"
    if hint:
        msg += f"; did you mean `{(path + '.') if path else ''}{hint[0]}`?"
    return ConfigError(msg)


def _coerce(path: str, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, bool) or not isinstance(value, typ):
        raise ConfigError(f"`{path}` must be of type {typ.__name__}, got {type(value).__name__}")
    return value


def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    """Validate ``raw`` against the schema and fill defaults."""
    raw = copy.deepcopy(raw)
    sections = [s for s in SCHEMA if s] + ["potential"]
    top_allowed = list(SCHEMA[""]) + sections
    for key in raw:
        if key not in top_allowed:
            raise _unknown("", key, top_allowed)
    data: Dict[str, Any] = {}
    for section, fields in SCHEMA.items():
        src = raw if section == "" else raw.get(section, {})
        if section and not isinstance(src, dict):
            raise ConfigError(f"`{section}` must be a table")
        out = data if section == "" else data.setdefault(section, {})
        if section:
            for key in src:
                if key not in fields:
                    raise _unknown(section, key, fields)
        for key, (default, typ, constraint) in fields.items():
            path = f"{section}.{key}" if section else key
            if key in src:
                value = _coerce(path, src[key], typ)
                if constraint is not None and not constraint[0](value):
                    raise ConfigError(f"`{path}` {constraint[1]} (got {value!r})")
            else:
                value = copy.deepcopy(default)
            out[key] = value
    p = raw.get("potential", DEFAULT_POTENTIAL)
    if not isinstance(p, dict):
        raise ConfigError("`potential` must be a table")
    for key in p:
        if key not in POTENTIAL_KEYS:
            raise _unknown("potential", key, POTENTIAL_KEYS)
    if "preset" not in p and "form" not in p:
        raise ConfigError("`potential` needs either `preset` or `form`")
    if "preset" in p and p["preset"] not in pot.PRESETS:
        raise ConfigError(f"`potential.preset` must be one of {sorted(pot.PRESETS)} (got {p['preset']!r})")
    data["potential"] = dict(p)
    sim = data["simulation"]
    if len(sim["center"]) < data["n"]:
        raise ConfigError(f"`simulation.center` needs {data['n']} entries")
    sim["center"] = [float(c) for c in sim["center"][:data["n"]]]
    if data["time"]["output_interval"] < data["time"]["dt"]:
        raise ConfigError("`time.output_interval` must be >= `time.dt`")
    if data["tolerances"]["gram_dependent"] > data["tolerances"]["gram_independent"]:
        raise ConfigError("`tolerances.gram_dependent` must not exceed `tolerances.gram_independent`")
    cfg = RunConfig(data)
    try:
        cfg.build_potential(normalized=False)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"`potential`: {exc}") from exc
    return cfg


def parse_config(path: str) -> RunConfig:
    """Read a TOML file into a validated :class:`RunConfig`."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
