"""Run configuration: a TOML document with fixed sections, validated up front."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "load_config", "parse_config", "Y0_PRESETS"]


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


Y0_PRESETS = ("random", "first_mode", "decaying", "bump")
SCHEDULES = ("practical", "literal")
SWEEP_AXES = ("delta", "R", "M", "T", "omega_width")
SWEEP_COMMANDS = ("null-control", "time-optimal", "observability", "spectral-ineq", "constants")

DEFAULTS: dict[str, dict[str, Any]] = {
    "problem": {
        "modes": 32,
        "length": 1.0,
        "omega": [0.3, 0.8],
        "E": [[0.0, 0.4], [0.6, 1.0]],
        "T": 1.0,
        "y0": "random",
        "y0_scale": 1.0,
    },
    "solver": {
        "seed": 0,
        "K": 100,
        "tol": 1e-6,
        "tol_T": None,
        "T_init": 1.0,
        "T_cap": 1000.0,
        "max_iter": 5000,
        "stop_tol": 1e-8,
        "max_stages": 6,
        "schedule": "practical",
        "q": 0.5,
        "depth": 16,
        "anchor": "longest",
        "start_fraction": 0.5,
        "margin": 0.0,
        "delta": 0.0,
        "c1": None,
        "c2": None,
        "r_modes": None,
        "band": 1e-2,
        "l1_starts": 8,
        "l1_iterations": 200,
        "panels": 512,
        "trials": 1000,
    },
    "constraint": {
        "R": 1.0,
        "v0": None,
        "target_radius": 0.0,
        "target_center": None,
        "full_time": True,
    },
    "improve": {
        "E_slack": [[0.2, 0.6]],
        "eps": 0.2,
        "u_star": "slack_profile",
    },
    "sweep": {
        "command": "constants",
        "axis": "delta",
        "values": [0.0],
    },
    "output": {
        "directory": "out",
        "formats": ["json", "csv", "plot"],
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration.  ``data`` holds every section with defaults filled in."""

    data: dict

    def __getitem__(self, key: str) -> dict:
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["solver"]["seed"])

    def with_overrides(self, **sections) -> "RunConfig":
        d = copy.deepcopy(self.data)
        for sec, vals in sections.items():
            d[sec].update(vals)
        return parse_config(d)

    def snapshot(self) -> dict:
        return copy.deepcopy(self.data)


def _num(sec: str, key: str, v, lo=None, hi=None, integer=False, strict_lo=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"[{sec}] {key} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"[{sec}] {key} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"[{sec}] {key} must be finite")
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        raise ConfigError(f"[{sec}] {key} = {v} is below the allowed range")
    if hi is not None and v > hi:
        raise ConfigError(f"[{sec}] {key} = {v} is above the allowed range")
    return int(v) if integer else float(v)


def _intervals(sec: str, key: str, v, horizon: float | None = None) -> list[list[float]]:
    if not isinstance(v, list) or not all(isinstance(p, list) and len(p) == 2 for p in v):
        raise ConfigError(f"[{sec}] {key} must be a list of [start, end] pairs")
    out = []
    for a, b in v:
        a, b = _num(sec, key, a, lo=0.0), _num(sec, key, b, lo=0.0)
        if b < a:
            raise ConfigError(f"[{sec}] {key}: interval [{a}, {b}] is reversed")
        if horizon is not None and b > horizon + 1e-12:
            raise ConfigError(f"[{sec}] {key}: interval [{a}, {b}] exceeds the horizon {horizon}")
        out.append([a, b])
    return out


def _vector(sec: str, key: str, v, M: int):
    if v is None:
        return None
    if not isinstance(v, list) or len(v) != M:
        raise ConfigError(f"[{sec}] {key} must be a list of {M} numbers")
    return [_num(sec, key, x) for x in v]


def parse_config(raw: dict) -> RunConfig:
    """Merge ``raw`` over the defaults, rejecting unknown keys and invalid values."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    data = copy.deepcopy(DEFAULTS)
    for sec, vals in raw.items():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        if not isinstance(vals, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for k, v in vals.items():
            if k not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key '{k}' in [{sec}]")
            data[sec][k] = v

    p, s, c, imp, sw, o = (data[k] for k in ("problem", "solver", "constraint", "improve", "sweep", "output"))
    p["modes"] = _num("problem", "modes", p["modes"], lo=1, integer=True)
    p["length"] = _num("problem", "length", p["length"], lo=0.0, strict_lo=True)
    L = p["length"]
    if not isinstance(p["omega"], list) or len(p["omega"]) != 2:
        raise ConfigError("[problem] omega must be [alpha, beta]")
    a, b = (_num("problem", "omega", x) for x in p["omega"])
    if not 0.0 <= a < b <= L:
        raise ConfigError(f"[problem] omega = ({a}, {b}) must satisfy 0 <= alpha < beta <= length")
    p["omega"] = [a, b]
    p["T"] = _num("problem", "T", p["T"], lo=0.0, strict_lo=True)
    p["E"] = _intervals("problem", "E", p["E"], p["T"])
    if sum(b - a for a, b in p["E"]) <= 0:
        raise ConfigError("[problem] E must have positive measure")
    if isinstance(p["y0"], str):
        if p["y0"] not in Y0_PRESETS:
            raise ConfigError(f"[problem] y0 preset must be one of {Y0_PRESETS}")
    else:
        p["y0"] = _vector("problem", "y0", p["y0"], p["modes"])
    p["y0_scale"] = _num("problem", "y0_scale", p["y0_scale"], lo=0.0)

    s["seed"] = _num("solver", "seed", s["seed"], lo=0, hi=2**64 - 1, integer=True)
    s["K"] = _num("solver", "K", s["K"], lo=1, integer=True)
    s["tol"] = _num("solver", "tol", s["tol"], lo=0.0)
    if s["tol_T"] is not None:
        s["tol_T"] = _num("solver", "tol_T", s["tol_T"], lo=0.0, strict_lo=True)
    s["T_init"] = _num("solver", "T_init", s["T_init"], lo=0.0, strict_lo=True)
    s["T_cap"] = _num("solver", "T_cap", s["T_cap"], lo=s["T_init"])
    s["max_iter"] = _num("solver", "max_iter", s["max_iter"], lo=1, integer=True)
    s["stop_tol"] = _num("solver", "stop_tol", s["stop_tol"], lo=0.0)
    s["max_stages"] = _num("solver", "max_stages", s["max_stages"], lo=1, integer=True)
    if s["schedule"] not in SCHEDULES:
        raise ConfigError(f"[solver] schedule must be one of {SCHEDULES}")
    s["q"] = _num("solver", "q", s["q"], lo=0.0, hi=1.0, strict_lo=True)
    if s["q"] >= 1.0:
        raise ConfigError("[solver] q must lie in (0, 1)")
    s["depth"] = _num("solver", "depth", s["depth"], lo=3, integer=True)
    if s["anchor"] != "longest":
        s["anchor"] = _num("solver", "anchor", s["anchor"], lo=0, integer=True)
        if s["anchor"] >= len(p["E"]):
            raise ConfigError("[solver] anchor index out of range")
    s["start_fraction"] = _num("solver", "start_fraction", s["start_fraction"], lo=0.0, hi=1.0)
    if s["start_fraction"] >= 1.0:
        raise ConfigError("[solver] start_fraction must lie in [0, 1)")
    s["margin"] = _num("solver", "margin", s["margin"], lo=0.0)
    s["delta"] = _num("solver", "delta", s["delta"], lo=0.0)
    for k in ("c1", "c2"):
        if s[k] is not None:
            s[k] = _num("solver", k, s[k], lo=0.0, strict_lo=True)
    if s["r_modes"] is None:
        s["r_modes"] = min(16, p["modes"])
    s["r_modes"] = _num("solver", "r_modes", s["r_modes"], lo=1, integer=True)
    if s["r_modes"] > p["modes"]:
        raise ConfigError("[solver] r_modes cannot exceed [problem] modes")
    s["band"] = _num("solver", "band", s["band"], lo=0.0, strict_lo=True)
    s["l1_starts"] = _num("solver", "l1_starts", s["l1_starts"], lo=0, integer=True)
    s["l1_iterations"] = _num("solver", "l1_iterations", s["l1_iterations"], lo=1, integer=True)
    s["panels"] = _num("solver", "panels", s["panels"], lo=1, integer=True)
    s["trials"] = _num("solver", "trials", s["trials"], lo=0, integer=True)

    c["R"] = _num("constraint", "R", c["R"], lo=0.0)
    c["v0"] = _vector("constraint", "v0", c["v0"], p["modes"])
    c["target_radius"] = _num("constraint", "target_radius", c["target_radius"], lo=0.0)
    c["target_center"] = _vector("constraint", "target_center", c["target_center"], p["modes"])
    if not isinstance(c["full_time"], bool):
        raise ConfigError("[constraint] full_time must be true or false")

    imp["E_slack"] = _intervals("improve", "E_slack", imp["E_slack"], p["T"])
    imp["eps"] = _num("improve", "eps", imp["eps"], lo=0.0, strict_lo=True)
    if imp["u_star"] not in ("slack_profile",):
        raise ConfigError("[improve] u_star must be 'slack_profile'")

    if sw["command"] not in SWEEP_COMMANDS:
        raise ConfigError(f"[sweep] command must be one of {SWEEP_COMMANDS}")
    if sw["axis"] not in SWEEP_AXES:
        raise ConfigError(f"[sweep] axis must be one of {SWEEP_AXES}")
    if not isinstance(sw["values"], list) or not sw["values"]:
        raise ConfigError("[sweep] values must be a nonempty list")
    sw["values"] = [_num("sweep", "values", v) for v in sw["values"]]

    if not isinstance(o["directory"], str):
        raise ConfigError("[output] directory must be a string")
    if not isinstance(o["formats"], list) or not set(o["formats"]) <= {"json", "csv", "plot"}:
        raise ConfigError("[output] formats must be a subset of ['json', 'csv', 'plot']")
    return RunConfig(data)


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a TOML configuration; ``None`` gives the defaults."""
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return parse_config(raw)
