"""Reluctivity models.

Steel is described by a monotone cubic Hermite spline of nu over s = B^2,
fitted to B-H samples, with a constant-nu extension below the first sample and
a B-H line of slope 1/nu0 above the last one. The energy density
w(s) = 1/2 int_0^s nu(t) dt is evaluated from closed-form antiderivatives.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .kernels import AIR, CORE, WINDING
from .scaling import NU0


class NonMonotoneData(ValueError):
    pass


# B-H samples: H in A/m, B in T.
TABLE_II = (
    (70.0, 0.7), (110.0, 1.0), (170.0, 1.2), (230.0, 1.3), (370.0, 1.4),
    (770.0, 1.5), (1280.0, 1.55), (2100.0, 1.6), (3250.0, 1.65), (4720.0, 1.7),
    (8720.0, 1.8), (14880.0, 1.9), (26020.0, 2.0), (65520.0, 2.1),
)


@dataclass(frozen=True)
class BHCurve:
    H: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if H.shape != B.shape or H.ndim != 1 or len(H) < 2:
            raise ValueError("B-H curve needs two equal-length 1-D arrays of at least 2 points")
        if np.any(np.diff(B) <= 0) or np.any(np.diff(H) <= 0):
            raise NonMonotoneData("B and H must be strictly increasing")
        if np.any(B <= 0):
            raise ValueError("B samples must be positive")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "B", B)

    @property
    def s(self) -> np.ndarray:
        return self.B**2

    @property
    def nu(self) -> np.ndarray:
        return self.H / self.B

    @classmethod
    def table2(cls) -> "BHCurve":
        data = np.array(TABLE_II)
        return cls(data[:, 0], data[:, 1])

    @classmethod
    def from_file(cls, path) -> "BHCurve":
        """Read ``H B`` pairs (A/m, T), one per line; ``#`` starts a comment."""
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                h, b = line.replace(",", " ").split()
                rows.append((float(h), float(b)))
        data = np.array(rows)
        return cls(data[:, 0], data[:, 1])


def fritsch_carlson_slopes(x, y):
    """Monotonicity-preserving Hermite tangents (Fritsch-Carlson limiter)."""
    h = np.diff(x)
    delta = np.diff(y) / h
    m = np.empty_like(y)
    m[0] = delta[0]
    m[-1] = delta[-1]
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
    for k in range(len(delta)):
        if delta[k] == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        a = m[k] / delta[k]
        b = m[k + 1] / delta[k]
        r = a * a + b * b
        if r > 9.0:
            tau = 3.0 / np.sqrt(r)
            m[k] = tau * a * delta[k]
            m[k + 1] = tau * b * delta[k]
    return m


class ReluctivityModel:
    """nu(s), dnu/ds and w(s) for one saturable material."""

    def __init__(self, curve: BHCurve, nu0: float, knots, coef, e_off):
        self.curve = curve
        self.nu0 = nu0
        self.knots = knots
        self.coef = coef
        self.e_off = e_off
        self.nu_low = float(curve.H[0] / curve.B[0])
        self.h_max = float(curve.H[-1])
        self.b_max = float(curve.B[-1])

    def evaluate(self, s):
        """Return ``(nu, dnu_ds, w)`` at squared flux density ``s`` (T^2)."""
        s = np.asarray(s, dtype=float)
        return kernels.steel_eval(
            s, self.knots, self.coef, self.e_off, self.nu_low, self.h_max, self.b_max, self.nu0
        )

    def nu(self, s):
        return self.evaluate(s)[0]

    def dnu(self, s):
        return self.evaluate(s)[1]

    def energy(self, s):
        return self.evaluate(s)[2]


def build_reluctivity(curve: BHCurve, nu0: float = NU0) -> ReluctivityModel:
    s = curve.s
    nu = curve.nu
    if np.any(np.diff(nu) < 0):
        raise NonMonotoneData("H/B must be non-decreasing along the curve")
    m = fritsch_carlson_slopes(s, nu)
    h = np.diff(s)
    delta = np.diff(nu) / h
    coef = np.empty((len(h), 4))
    coef[:, 0] = nu[:-1]
    coef[:, 1] = m[:-1]
    coef[:, 2] = (3.0 * delta - 2.0 * m[:-1] - m[1:]) / h
    coef[:, 3] = (m[:-1] + m[1:] - 2.0 * delta) / h**2

    # energy at each knot, accumulated left to right from s = 0
    e_off = np.empty(len(s))
    e_off[0] = 0.5 * nu[0] * s[0]
    c0, c1, c2, c3 = coef.T
    seg = 0.5 * h * (c0 + h * (c1 / 2.0 + h * (c2 / 3.0 + h * c3 / 4.0)))
    e_off[1:] = e_off[0] + np.cumsum(seg)
    return ReluctivityModel(curve, nu0, np.ascontiguousarray(s), coef, e_off)


class LinearMaterial:
    """Constant reluctivity; same interface as :class:`ReluctivityModel`."""

    def __init__(self, nu: float):
        self.nu_value = float(nu)

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        return np.full(s.shape, self.nu_value), np.zeros(s.shape), 0.5 * self.nu_value * s

    def nu(self, s):
        return self.evaluate(s)[0]

    def dnu(self, s):
        return self.evaluate(s)[1]

    def energy(self, s):
        return self.evaluate(s)[2]


class MaterialMap:
    """Assigns a reluctivity model to each region code.

    The default maps the core to ``steel`` and both winding and air to nu0.
    """

    def __init__(self, steel, winding=None, air=None, nu0: float = NU0):
        self.nu0 = nu0
        self.models = {
            CORE: steel,
            WINDING: winding if winding is not None else LinearMaterial(nu0),
            AIR: air if air is not None else LinearMaterial(nu0),
        }

    def evaluate(self, regions, s):
        regions = np.asarray(regions)
        s = np.asarray(s, dtype=float)
        nu = np.empty(s.shape)
        dnu = np.empty(s.shape)
        w = np.empty(s.shape)
        for code, model in self.models.items():
            sel = regions == code
            if np.any(sel):
                nu[sel], dnu[sel], w[sel] = model.evaluate(s[sel])
        return nu, dnu, w

    def is_linear(self) -> bool:
        return all(isinstance(m, LinearMaterial) for m in self.models.values())


def default_materials(steel: str = "table2", nu_ratio: float = 1000.0, curve=None) -> MaterialMap:
    """``steel='table2'`` uses the spline model, ``'linear'`` uses nu0/nu_ratio."""
    if steel == "linear":
        return MaterialMap(LinearMaterial(NU0 / nu_ratio))
    if steel == "table2":
        return MaterialMap(build_reluctivity(curve if curve is not None else BHCurve.table2()))
    raise ValueError(f"unknown steel model {steel!r}")


def reluctivity_at(point, xi, s, layout=None, materials: MaterialMap | None = None):
    """Reluctivity at a physical point of the design's layout."""
    from .geometry import build_layout

    if materials is None:
        materials = default_materials()
    if layout is None:
        layout = build_layout(xi)
    region = layout.classify(point)
    nu, _, _ = materials.evaluate(np.array([int(region)]), np.array([float(s)]))
    return float(nu[0])
