"""Parametric problem: which design parameters vary, materials, scaling.

Parameters not listed in ``free`` are held at the values of ``base``. The
network sees the normalized free parameters only, so d_xi == len(free).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import build_layout, domain_lengths_array
from .materials import MaterialMap, default_materials
from .scaling import PARAM_NAMES, DeviceParams, ScalingConstants, default_constants


@dataclass
class Batch:
    """Collocation samples in scaled units, one row per sample."""

    points: np.ndarray  # (n, 2)
    xi: np.ndarray  # (n, d_xi)
    lengths: np.ndarray  # (n, 2)
    regions: np.ndarray  # (n,) int8
    current: np.ndarray  # (n,) scaled current density

    def __len__(self):
        return self.points.shape[0]

    @property
    def area(self) -> np.ndarray:
        return self.lengths[:, 0] * self.lengths[:, 1]

    def chunks(self, k):
        """Split into k contiguous sub-batches (for threaded evaluation)."""
        idx = np.array_split(np.arange(len(self)), k)
        return [
            Batch(self.points[i], self.xi[i], self.lengths[i], self.regions[i], self.current[i])
            for i in idx
            if len(i)
        ]


class Problem:
    def __init__(
        self,
        free=PARAM_NAMES,
        base: DeviceParams | None = None,
        materials: MaterialMap | None = None,
        scaling: ScalingConstants | None = None,
        steel: str = "table2",
        nu_ratio: float = 1000.0,
    ):
        unknown = set(free) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names {sorted(unknown)}")
        self.free = tuple(n for n in PARAM_NAMES if n in free)
        self.free_idx = np.array([PARAM_NAMES.index(n) for n in self.free], dtype=int)
        self.base = base if base is not None else DeviceParams.midpoint()
        self.steel = steel
        self.nu_ratio = nu_ratio
        self.materials = materials if materials is not None else default_materials(steel, nu_ratio)
        self.scaling = scaling if scaling is not None else default_constants()

    @property
    def d_xi(self) -> int:
        return len(self.free)

    def to_dict(self) -> dict:
        return {
            "free": list(self.free),
            "base": {n: getattr(self.base, n) for n in PARAM_NAMES},
            "steel": self.steel,
            "nu_ratio": self.nu_ratio,
        }

    @classmethod
    def from_dict(cls, d, scaling=None) -> "Problem":
        base = DeviceParams(**d["base"]) if d.get("base") else None
        return cls(
            free=tuple(d.get("free", PARAM_NAMES)),
            base=base,
            scaling=scaling,
            steel=d.get("steel", "table2"),
            nu_ratio=float(d.get("nu_ratio", 1000.0)),
        )

    # designs

    def designs(self, xi_scaled) -> np.ndarray:
        """Full SI design vectors (n, 10) for normalized free parameters (n, d_xi)."""
        xi_scaled = np.atleast_2d(np.asarray(xi_scaled, dtype=float))
        n = xi_scaled.shape[0]
        full = np.tile(self.base.as_vector(), (n, 1))
        if self.d_xi:
            lo = np.asarray(self.scaling.xi_min)[self.free_idx]
            hi = np.asarray(self.scaling.xi_max)[self.free_idx]
            full[:, self.free_idx] = lo + xi_scaled.reshape(n, self.d_xi) * (hi - lo)
        return full

    def design(self, xi_scaled) -> DeviceParams:
        return DeviceParams.from_vector(self.designs(xi_scaled)[0])

    def xi_scaled(self, xi: DeviceParams) -> np.ndarray:
        """Normalized free parameters of a design (checked against the box)."""
        return self.scaling.normalize_params(xi)[self.free_idx]

    def scaled_lengths(self, xi_scaled) -> np.ndarray:
        L_x, L_y = domain_lengths_array(self.designs(xi_scaled))
        return np.stack([L_x, L_y], axis=1) / self.scaling.x_star

    # sampling

    def sample_xi(self, n, rng) -> np.ndarray:
        return rng.random((n, self.d_xi))

    def make_batch(self, xi_scaled, points_scaled_per_design) -> Batch:
        """Assemble a batch from designs (n_xi, d_xi) and their scaled points."""
        c = self.scaling
        pts, xis, lens, regs, cur = [], [], [], [], []
        for xs, p in zip(np.atleast_2d(xi_scaled), points_scaled_per_design):
            xi = DeviceParams.from_vector(self.designs(xs)[0], checked=False)
            layout = build_layout(xi)
            phys = p * c.x_star
            r = layout.classify_array(phys[:, 0], phys[:, 1])
            pts.append(p)
            xis.append(np.broadcast_to(xs, (len(p), self.d_xi)))
            lens.append(np.broadcast_to([layout.L_x / c.x_star, layout.L_y / c.x_star], (len(p), 2)))
            regs.append(r)
            cur.append(np.where(r == kernels.WINDING, layout.current_density_winding / c.J_star, 0.0))
        points = np.concatenate(pts)
        return Batch(
            points,
            np.concatenate(xis).reshape(len(points), self.d_xi),
            np.concatenate(lens),
            np.concatenate(regs),
            np.concatenate(cur),
        )

    def sample_batch(self, n_xi, n_x, rng_xi, rng_x, xi_scaled=None) -> Batch:
        """n_xi designs uniform on the unit box, n_x points uniform on each scaled domain."""
        if xi_scaled is None:
            xi_scaled = self.sample_xi(n_xi, rng_xi)
        lengths = self.scaled_lengths(xi_scaled)
        points = [rng_x.random((n_x, 2)) * lengths[i] for i in range(len(lengths))]
        return self.make_batch(xi_scaled, points)

    # scaled energy

    def scaled_energy(self, regions, s_scaled):
        """Scaled energy density and its derivative (nu_bar / 2) in s_bar = |grad A_bar|^2."""
        c = self.scaling
        b2 = c.B_star**2
        nu, _, w = self.materials.evaluate(regions, b2 * np.asarray(s_scaled))
        return w / (c.nu_star * b2), 0.5 * nu / c.nu_star
