"""Nondimensionalization constants and the design-parameter box.

All physical quantities are kept in SI base units. Table-style units (cm, mm)
are converted once, when a configuration is parsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

NU0 = 1e7 / (4.0 * math.pi)  # reluctivity of free space [m/H]

# Order of the design vector xi used everywhere (network input, checkpoints, CSVs).
PARAM_NAMES = ("w_c", "w_e", "w_i", "w_b", "w_w", "d_w", "c_d", "c_w", "g", "f_c")

# Admissible box in SI units.
PARAM_MIN = {
    "w_i": 0.5e-2, "w_c": 1.0e-2, "w_e": 0.5e-2, "w_b": 0.5e-2, "w_w": 0.945e-2,
    "d_w": 3.78e-2, "c_w": 1.0e-3, "c_d": 1.0e-3, "g": 1.0e-3, "f_c": 2400.0,
}
PARAM_MAX = {
    "w_i": 1.5e-2, "w_c": 3.0e-2, "w_e": 1.5e-2, "w_b": 1.5e-2, "w_w": 2.1e-2,
    "d_w": 6.3e-2, "c_w": 3.0e-3, "c_d": 3.0e-3, "g": 5.0e-3, "f_c": 6600.0,
}

# Factor converting the conventional unit of each parameter to SI.
PARAM_UNITS = {
    "w_i": ("cm", 1e-2), "w_c": ("cm", 1e-2), "w_e": ("cm", 1e-2), "w_b": ("cm", 1e-2),
    "w_w": ("cm", 1e-2), "d_w": ("cm", 1e-2), "c_w": ("mm", 1e-3), "c_d": ("mm", 1e-3),
    "g": ("mm", 1e-3), "f_c": ("At", 1.0),
}


class OutOfBox(ValueError):
    """A design parameter lies outside the admissible box."""

    def __init__(self, name, value, lo, hi):
        super().__init__(f"parameter {name}={value!r} outside [{float(lo)!r}, {float(hi)!r}]")
        self.name = name
        self.value = value


@dataclass(frozen=True)
class DeviceParams:
    """EI-core design vector in SI units (widths in m, f_c in ampere-turns)."""

    w_i: float
    w_c: float
    w_e: float
    w_b: float
    w_w: float
    d_w: float
    c_w: float
    c_d: float
    g: float
    f_c: float
    checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.checked:
            for name in PARAM_NAMES:
                v = getattr(self, name)
                if not PARAM_MIN[name] <= v <= PARAM_MAX[name]:
                    raise OutOfBox(name, v, PARAM_MIN[name], PARAM_MAX[name])

    @classmethod
    def unchecked(cls, **kw) -> "DeviceParams":
        """Build without the box check (for unit tests and synthetic layouts)."""
        return cls(**kw, checked=False)

    @classmethod
    def from_vector(cls, vec, checked=True) -> "DeviceParams":
        vec = np.asarray(vec, dtype=float)
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, vec)}, checked=checked)

    @classmethod
    def from_table_units(cls, **kw) -> "DeviceParams":
        """Build from cm / mm / At values as listed in the parameter table."""
        return cls(**{k: v * PARAM_UNITS[k][1] for k, v in kw.items()})

    @classmethod
    def midpoint(cls) -> "DeviceParams":
        return cls(**{n: 0.5 * (PARAM_MIN[n] + PARAM_MAX[n]) for n in PARAM_NAMES})

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    def replace(self, **kw) -> "DeviceParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(kw)
        return DeviceParams(**values)


@dataclass(frozen=True)
class ScalingConstants:
    """Characteristic scales: length, vector potential, current density.

    The reluctivity and flux-density scales are derived so that the scaled
    Poisson problem keeps unit coefficients.
    """

    x_star: float
    A_star: float
    J_star: float
    xi_min: tuple = tuple(PARAM_MIN[n] for n in PARAM_NAMES)
    xi_max: tuple = tuple(PARAM_MAX[n] for n in PARAM_NAMES)

    def __post_init__(self):
        if len(self.xi_min) != len(self.xi_max):
            raise ValueError("xi_min and xi_max differ in length")
        for i, (lo, hi) in enumerate(zip(self.xi_min, self.xi_max)):
            if not lo < hi:
                raise ValueError(f"empty range for component {i}: [{lo}, {hi}]")

    @property
    def nu_star(self) -> float:
        return self.x_star**2 * self.J_star / self.A_star

    @property
    def B_star(self) -> float:
        return self.A_star / self.x_star

    # coordinates, potentials, currents, reluctivity

    def scale_point(self, x):
        return np.asarray(x) / self.x_star

    def unscale_point(self, xs):
        return np.asarray(xs) * self.x_star

    def scale_mvp(self, a):
        return np.asarray(a) / self.A_star

    def unscale_mvp(self, a_s):
        return np.asarray(a_s) * self.A_star

    def scale_current(self, j):
        return np.asarray(j) / self.J_star

    def unscale_current(self, j_s):
        return np.asarray(j_s) * self.J_star

    def scale_reluctivity(self, nu):
        return np.asarray(nu) / self.nu_star

    def scaled_b(self, grad_a_scaled):
        """Flux density magnitude, scaled, from the scaled potential gradient."""
        g = np.asarray(grad_a_scaled)
        return np.sqrt(np.sum(g * g, axis=-1))

    # design parameters

    def normalize_params(self, xi, tol: float = 0.0) -> np.ndarray:
        """Map a design (DeviceParams or raw vector) onto the unit hypercube.

        Components further than ``tol`` (relative to the range width) outside
        the box raise :class:`OutOfBox`.
        """
        vec = xi.as_vector() if isinstance(xi, DeviceParams) else np.asarray(xi, dtype=float)
        lo = np.asarray(self.xi_min)
        hi = np.asarray(self.xi_max)
        width = hi - lo
        bad = (vec < lo - tol * width) | (vec > hi + tol * width)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise OutOfBox(PARAM_NAMES[i], float(vec[i]), lo[i], hi[i])
        return (vec - lo) / width

    def normalize_params_unchecked(self, xi) -> np.ndarray:
        vec = xi.as_vector() if isinstance(xi, DeviceParams) else np.asarray(xi, dtype=float)
        lo = np.asarray(self.xi_min)
        return (vec - lo) / (np.asarray(self.xi_max) - lo)

    def denormalize_params(self, xi_scaled) -> np.ndarray:
        lo = np.asarray(self.xi_min)
        return lo + np.asarray(xi_scaled, dtype=float) * (np.asarray(self.xi_max) - lo)

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star,
            "A_star": self.A_star,
            "J_star": self.J_star,
            "xi_min": list(self.xi_min),
            "xi_max": list(self.xi_max),
        }

    @classmethod
    def from_dict(cls, d) -> "ScalingConstants":
        return cls(d["x_star"], d["A_star"], d["J_star"], tuple(d["xi_min"]), tuple(d["xi_max"]))


def default_constants() -> ScalingConstants:
    """x* = 11 cm, A* = 12.1 mWb/m and J* = 5000/pi A/m^2 (so nu* = nu0/500)."""
    return ScalingConstants(x_star=0.11, A_star=12.1e-3, J_star=5000.0 / math.pi)
