"""EI-core half-domain layout: rectangles, region lookup, sources, sampling.

Coordinates are physical (m). x runs from the symmetry axis (x = 0), y from
the bottom boundary. Bottom to top: margin, E-core base, legs with the
winding slot, air gap, I-core, margin.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scaling import DeviceParams

B_X = 5e-3
B_Y = 5e-3


class OutsideDomain(ValueError):
    pass


class Region(enum.IntEnum):
    CORE = kernels.CORE
    WINDING = kernels.WINDING
    AIR = kernels.AIR


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, x, y) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1


@dataclass(frozen=True)
class DeviceLayout:
    L_x: float
    L_y: float
    e_base: Rect
    center_leg: Rect
    end_leg: Rect
    winding: Rect
    i_core: Rect
    w_dev: float
    current_density_winding: float

    @property
    def cores(self):
        return (self.e_base, self.center_leg, self.end_leg, self.i_core)

    @property
    def gap_band(self) -> Rect:
        """Air between the top of the E-core legs and the I-core."""
        return Rect(0.0, self.w_dev, self.center_leg.y1, self.i_core.y0)

    def _rect_table(self):
        rects = [(r.x0, r.x1, r.y0, r.y1) for r in self.cores]
        rects.append((self.winding.x0, self.winding.x1, self.winding.y0, self.winding.y1))
        codes = [kernels.CORE] * 4 + [kernels.WINDING]
        return np.array(rects), np.array(codes, dtype=np.int64)

    def classify_array(self, x, y) -> np.ndarray:
        rects, codes = self._rect_table()
        return kernels.classify(x, y, rects, codes)

    def classify(self, point) -> Region:
        x, y = float(point[0]), float(point[1])
        if not (0.0 <= x <= self.L_x and 0.0 <= y <= self.L_y):
            raise OutsideDomain(f"point ({x}, {y}) outside [0, {self.L_x}] x [0, {self.L_y}]")
        return Region(int(self.classify_array(np.array([x]), np.array([y]))[0]))

    def x_breaks(self) -> np.ndarray:
        xs = [0.0, self.L_x]
        for r in self.cores + (self.winding,):
            xs += [r.x0, r.x1]
        return np.unique(np.array(xs))

    def y_breaks(self) -> np.ndarray:
        ys = [0.0, self.L_y]
        for r in self.cores + (self.winding,):
            ys += [r.y0, r.y1]
        return np.unique(np.array(ys))


@dataclass(frozen=True)
class BoxLayout:
    """Plain rectangle filled with a single region; used for solver checks."""

    L_x: float
    L_y: float
    region: Region = Region.WINDING
    current_density_winding: float = 0.0

    def classify_array(self, x, y) -> np.ndarray:
        return np.full(np.shape(x), int(self.region), dtype=np.int8)

    def classify(self, point) -> Region:
        x, y = float(point[0]), float(point[1])
        if not (0.0 <= x <= self.L_x and 0.0 <= y <= self.L_y):
            raise OutsideDomain(f"point ({x}, {y}) outside the box")
        return self.region

    def x_breaks(self):
        return np.array([0.0, self.L_x])

    def y_breaks(self):
        return np.array([0.0, self.L_y])


def domain_lengths(xi: DeviceParams):
    L_x = B_X + 0.5 * xi.w_c + xi.w_w + xi.c_w + xi.w_e
    L_y = 2 * B_Y + xi.w_i + xi.g + xi.d_w + xi.c_d + xi.w_b
    return L_x, L_y


def domain_lengths_array(vecs):
    """Vectorized L_x, L_y for an (n, 10) array of designs in SI units."""
    v = np.atleast_2d(vecs)
    w_c, w_e, w_i, w_b, w_w, d_w, c_d, c_w, g, _ = v.T
    L_x = B_X + 0.5 * w_c + w_w + c_w + w_e
    L_y = 2 * B_Y + w_i + g + d_w + c_d + w_b
    return L_x, L_y


def build_layout(xi: DeviceParams) -> DeviceLayout:
    L_x, L_y = domain_lengths(xi)
    w_dev = 0.5 * xi.w_c + xi.w_w + xi.c_w + xi.w_e
    y_base = B_Y + xi.w_b
    y_legs = y_base + xi.d_w + xi.c_d
    y_ibot = y_legs + xi.g
    x_wind = 0.5 * xi.w_c
    return DeviceLayout(
        L_x=L_x,
        L_y=L_y,
        e_base=Rect(0.0, w_dev, B_Y, y_base),
        center_leg=Rect(0.0, x_wind, y_base, y_legs),
        end_leg=Rect(x_wind + xi.w_w + xi.c_w, w_dev, y_base, y_legs),
        winding=Rect(x_wind, x_wind + xi.w_w, y_base, y_base + xi.d_w),
        i_core=Rect(0.0, w_dev, y_ibot, y_ibot + xi.w_i),
        w_dev=w_dev,
        current_density_winding=xi.f_c / (xi.w_w * xi.d_w),
    )


def current_density(layout, xi, point) -> float:
    """Source current density (A/m^2) at a physical point."""
    region = layout.classify(point)
    if region == Region.WINDING:
        return xi.f_c / (xi.w_w * xi.d_w)
    return 0.0


def current_density_array(layout, regions) -> np.ndarray:
    return np.where(np.asarray(regions) == kernels.WINDING, layout.current_density_winding, 0.0)


def sample_points(layout, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform on the layout rectangle, shape (n, 2)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    u = rng.random((n, 2))
    return u * np.array([layout.L_x, layout.L_y])
