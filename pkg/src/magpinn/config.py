"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment. Every key must be known.
Lengths may carry a unit suffix (``m``, ``cm``, ``mm``); bare design lengths
are read in their conventional unit (cm for widths, mm for c_w, c_d, g),
bare ``max_area`` in mm^2. Everything is stored in SI after parsing.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .network import NetworkConfig
from .scaling import PARAM_NAMES, PARAM_UNITS, DeviceParams, ScalingConstants, default_constants
from .training import TrainConfig


class ConfigError(ValueError):
    pass


LENGTH_UNITS = {"m": 1.0, "cm": 1e-2, "mm": 1e-3}
AREA_UNITS = {"m2": 1.0, "cm2": 1e-4, "mm2": 1e-6}

# key -> (type, help)
KEYS = {
    # training
    "n_ite": (int, "number of ADAM iterations"),
    "n_xi": (int, "designs per batch"),
    "n_x": (int, "points per design per batch"),
    "eta_1": (float, "initial learning rate"),
    "eta_final": (float, "learning rate after the last iteration"),
    "beta_1": (float, "ADAM first-moment decay"),
    "beta_2": (float, "ADAM second-moment decay"),
    "eps_adam": (float, "ADAM denominator offset"),
    "optimizer": (str, "adam | sgd"),
    "checkpoint_every": (int, "iterations between checkpoints (0 = final only)"),
    "log_every": (int, "iterations between loss.csv rows"),
    "seed": (int, "root seed for all random streams"),
    "threads": (int, "worker threads (1 = strictly deterministic)"),
    # network
    "l_hidden": (int, "hidden layers"),
    "d_hidden": (int, "hidden width"),
    "m_harmonics": (int, "Fourier modes per coordinate"),
    # problem
    "free": (str, "comma-separated free parameters, 'all' or 'none'"),
    "steel": (str, "table2 | linear"),
    "nu_ratio": (float, "nu0 / nu_steel for linear steel"),
    "bh_curve": (str, "optional B-H table file (columns H B)"),
    # scaling
    "x_star": ("length", "characteristic length"),
    "A_star": (float, "characteristic potential [Wb/m]"),
    "J_star": (float, "characteristic current density [A/m^2]"),
    # fem / metrics
    "max_area": ("area", "maximum triangle area (bare value in mm^2)"),
    "tol": (float, "Newton tolerance relative to the load vector"),
    "max_newton": (int, "Newton iteration limit"),
    "n_path": (int, "points per Maxwell-stress path segment"),
    "n_designs": (int, "designs in the evaluation suite"),
    "eval_fields": (bool, "also dump per-design error fields"),
    "grid_nx": (int, "field grid columns"),
    "grid_ny": (int, "field grid rows"),
    "checkpoint": (str, "checkpoint file for eval / fields / force"),
    "out_dir": (str, "output directory"),
}
for _n in PARAM_NAMES:
    unit = PARAM_UNITS[_n][0]
    KEYS[_n] = ("param", f"design parameter (bare value in {unit})")


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    l_hidden: int = 3
    d_hidden: int = 64
    m_harmonics: int = 3
    free: tuple = PARAM_NAMES
    steel: str = "table2"
    nu_ratio: float = 1000.0
    bh_curve: str | None = None
    scaling: ScalingConstants = field(default_factory=default_constants)
    design: DeviceParams = field(default_factory=DeviceParams.midpoint)
    max_area: float = 0.25e-6
    tol: float = 1e-8
    max_newton: int = 50
    n_path: int = 200
    n_designs: int = 10
    eval_fields: bool = False
    grid_nx: int = 100
    grid_ny: int = 200
    checkpoint: str | None = None
    out_dir: str = "out"

    def network(self) -> NetworkConfig:
        return NetworkConfig(self.l_hidden, self.d_hidden, self.m_harmonics, len(self.free))


_NUM = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z0-9]*)\s*$")


def _split_unit(text):
    mt = _NUM.match(text)
    if not mt:
        raise ConfigError(f"cannot parse number {text!r}")
    return float(mt.group(1)), mt.group(2)


def _convert(key, kind, text):
    try:
        if kind is bool:
            low = text.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return low in ("1", "true", "yes")
        if kind in (int, float, str):
            return kind(text.strip())
        value, unit = _split_unit(text)
        if kind == "length":
            return value * LENGTH_UNITS[unit or "m"]
        if kind == "area":
            return value * AREA_UNITS[unit or "mm2"]
        if kind == "param":
            conv_unit, factor = PARAM_UNITS[key]
            if not unit or unit == conv_unit:
                return value * factor
            if key == "f_c" and unit in ("A", "At"):
                return value
            return value * LENGTH_UNITS[unit]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    raise AssertionError(kind)


def parse_text(text: str, source="<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, KEYS[key][0], val)
    return values


def build(values: dict) -> RunConfig:
    train_keys = {k: values[k] for k in TrainConfig.__dataclass_fields__ if k in values}
    design = {n: values[n] for n in PARAM_NAMES if n in values}
    sc = default_constants()
    try:
        tc = TrainConfig(**train_keys)
        xi = DeviceParams.midpoint().replace(**design) if design else DeviceParams.midpoint()
        scaling = ScalingConstants(values.get("x_star", sc.x_star), values.get("A_star", sc.A_star),
                                   values.get("J_star", sc.J_star), sc.xi_min, sc.xi_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    free = values.get("free", "all")
    if free.strip().lower() == "all":
        free = PARAM_NAMES
    elif free.strip().lower() in ("none", ""):
        free = ()
    else:
        names = tuple(n.strip() for n in free.split(",") if n.strip())
        unknown = [n for n in names if n not in PARAM_NAMES]
        if unknown:
            raise ConfigError(f"unknown free parameters {unknown}")
        free = tuple(n for n in PARAM_NAMES if n in names)
    rc = RunConfig(train=tc, free=free, scaling=scaling, design=xi)
    for k in ("l_hidden", "d_hidden", "m_harmonics", "steel", "nu_ratio", "bh_curve", "max_area",
              "tol", "max_newton", "n_path", "n_designs", "eval_fields", "grid_nx", "grid_ny", "checkpoint", "out_dir"):
        if k in values:
            setattr(rc, k, values[k])
    if rc.steel not in ("table2", "linear"):
        raise ConfigError(f"unknown steel model {rc.steel!r}")
    for k in ("l_hidden", "d_hidden", "m_harmonics", "n_path", "grid_nx", "grid_ny", "max_newton"):
        if getattr(rc, k) < 1:
            raise ConfigError(f"{k} must be at least 1")
    if not rc.max_area > 0 or not rc.tol > 0:
        raise ConfigError("max_area and tol must be positive")
    return rc


def load(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc.strerror}") from exc
    return build(parse_text(text, str(p)))


def help_text() -> str:
    return "\n".join(f"  {k:<17} {h}" for k, (_, h) in KEYS.items())
