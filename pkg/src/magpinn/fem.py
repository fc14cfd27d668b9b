"""First-order triangular FE solver for the nonlinear magnetostatic problem

    -div(nu(|grad A|^2) grad A) = J,  A = 0 on the boundary,

on a structured mesh whose grid lines include every material interface.
Newton iteration with the consistent tangent; Jacobi-preconditioned CG for
the linear solves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from . import kernels
from .geometry import OutsideDomain, current_density_array

log = logging.getLogger(__name__)

MIN_STEP = 1.0 / 16.0


class NonConvergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


def _subdivide(breaks, h):
    pts = [breaks[:1]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pts.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pts)


@dataclass(frozen=True)
class Mesh:
    xs: np.ndarray  # grid lines
    ys: np.ndarray
    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3), counter-clockwise
    regions: np.ndarray  # (n_tri,) int8
    area: np.ndarray
    boundary: np.ndarray  # (n_nodes,) bool
    gx: np.ndarray  # basis gradients (n_tri, 3)
    gy: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def locate(self, points) -> np.ndarray:
        """Index of the triangle containing each point; raises OutsideDomain."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = p[:, 0], p[:, 1]
        if np.any((x < self.xs[0]) | (x > self.xs[-1]) | (y < self.ys[0]) | (y > self.ys[-1])):
            raise OutsideDomain("point outside the meshed rectangle")
        nx = len(self.xs) - 1
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, nx - 1)
        j = np.clip(np.searchsorted(self.ys, y, side="right") - 1, 0, len(self.ys) - 2)
        u = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
        v = (y - self.ys[j]) / (self.ys[j + 1] - self.ys[j])
        upper = v > u  # above the (n00, n11) diagonal
        return 2 * (j * nx + i) + upper.astype(int)


def build_mesh(layout, max_area: float) -> Mesh:
    """Structured conforming triangulation with every cell area/2 <= max_area."""
    if not max_area > 0:
        raise ValueError("max_area must be positive")
    h = math.sqrt(2.0 * max_area)
    xs = _subdivide(np.asarray(layout.x_breaks(), dtype=float), h)
    ys = _subdivide(np.asarray(layout.y_breaks(), dtype=float), h)
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n00 = j * (nx + 1) + i
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    tri = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tri[0::2] = np.column_stack([n00, n10, n11])
    tri[1::2] = np.column_stack([n00, n11, n01])

    cx = 0.5 * (xs[i] + xs[i + 1])
    cy = 0.5 * (ys[j] + ys[j + 1])
    cell_region = layout.classify_array(cx, cy)
    regions = np.repeat(cell_region, 2).astype(np.int8)

    p = nodes[tri]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    two_a = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    gx = np.column_stack([y2 - y3, y3 - y1, y1 - y2]) / two_a[:, None]
    gy = np.column_stack([x3 - x2, x1 - x3, x2 - x1]) / two_a[:, None]

    bx = (nodes[:, 0] == xs[0]) | (nodes[:, 0] == xs[-1])
    by = (nodes[:, 1] == ys[0]) | (nodes[:, 1] == ys[-1])
    return Mesh(xs, ys, nodes, tri, regions, 0.5 * two_a, bx | by, gx, gy)


# damping


@dataclass
class NewtonDamping:
    """Step-scale controller: halve on a residual increase (not below 1/16),
    back to full steps after two successful iterations."""

    scale: float = 1.0
    successes: int = 0

    def update(self, increased: bool) -> float:
        if increased:
            self.scale = max(self.scale / 2.0, MIN_STEP)
            self.successes = 0
        else:
            self.successes += 1
            if self.successes >= 2:
                self.scale = 1.0
        return self.scale


def newton_damping(history) -> float:
    """Step scale implied by a sequence of residual norms."""
    if len(history) < 1:
        raise ValueError("need at least one completed Newton step")
    d = NewtonDamping()
    for prev, cur in zip(history[:-1], history[1:]):
        d.update(cur > prev)
    return d.scale


# solve


@dataclass(frozen=True)
class FemSolution:
    mesh: Mesh
    A: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)

    def element_b(self):
        """Constant (B_x, B_y) per triangle."""
        a = self.A[self.mesh.triangles]
        bx = np.einsum("ej,ej->e", self.mesh.gy, a)
        by = -np.einsum("ej,ej->e", self.mesh.gx, a)
        return bx, by

    def evaluate_many(self, points):
        """A, B_x, B_y at an (n, 2) array of points."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.mesh
        e = m.locate(p)
        tri = m.triangles[e]
        a = self.A[tri]
        x0 = m.nodes[tri[:, 0]]
        # linear interpolant: A(p) = A_0 + grad A . (p - x_0)
        dadx = np.einsum("ej,ej->e", m.gx[e], a)
        dady = np.einsum("ej,ej->e", m.gy[e], a)
        val = a[:, 0] + dadx * (p[:, 0] - x0[:, 0]) + dady * (p[:, 1] - x0[:, 1])
        # exact nodal values at mesh vertices
        ix = np.clip(np.searchsorted(m.xs, p[:, 0]), 0, len(m.xs) - 1)
        iy = np.clip(np.searchsorted(m.ys, p[:, 1]), 0, len(m.ys) - 1)
        on = (m.xs[ix] == p[:, 0]) & (m.ys[iy] == p[:, 1])
        val[on] = self.A[iy[on] * len(m.xs) + ix[on]]
        return val, dady, -dadx


def evaluate(solution: FemSolution, point):
    a, bx, by = solution.evaluate_many(np.asarray(point, dtype=float).reshape(1, 2))
    return float(a[0]), float(bx[0]), float(by[0])


def _assemble(mesh, res_e, K_e, n):
    tri = mesh.triangles
    r = np.zeros(n)
    np.add.at(r, tri.ravel(), res_e.ravel())
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    K = sp.csr_matrix((K_e.ravel(), (rows, cols)), shape=(n, n))
    return r, K


def load_vector(mesh: Mesh, J_elem) -> np.ndarray:
    f = np.zeros(mesh.n_nodes)
    np.add.at(f, mesh.triangles.ravel(), np.repeat(J_elem * mesh.area / 3.0, 3))
    return f


class _System:
    def __init__(self, mesh, materials, J_elem):
        self.mesh = mesh
        self.materials = materials
        self.J = J_elem
        self.f = load_vector(mesh, J_elem)
        self.free = ~mesh.boundary

    def state(self, A):
        m = self.mesh
        a_loc = A[m.triangles]
        ax = np.einsum("ej,ej->e", m.gx, a_loc)
        ay = np.einsum("ej,ej->e", m.gy, a_loc)
        s = ax * ax + ay * ay
        nu, dnu, w = self.materials.evaluate(m.regions, s)
        res_e, K_e = kernels.element_tangent(m.gx, m.gy, a_loc, nu, dnu, m.area)
        r, K = _assemble(m, res_e, K_e, m.n_nodes)
        r -= self.f
        energy = float(np.sum(m.area * (w - self.J * a_loc.mean(axis=1))))
        return r, K, energy

    def residual_norm(self, r):
        return float(np.max(np.abs(r[self.free]))) if np.any(self.free) else 0.0


def tangent_matrix(mesh: Mesh, materials, A) -> sp.csr_matrix:
    _, K, _ = _System(mesh, materials, np.zeros(mesh.n_triangles)).state(np.asarray(A, float))
    return K


def solve(mesh: Mesh, materials, J_elem=None, *, layout=None, tol: float = 1e-8,
          max_newton: int = 50, cg_rtol: float = 1e-10) -> FemSolution:
    """Newton solve of the Galerkin system.

    ``J_elem`` is the current density per triangle (A/m^2); when omitted it
    is taken from ``layout`` (winding triangles carry f_c / (w_w d_w)).
    Converged when max |R_free| <= tol * max |f| (absolute ``tol`` for f = 0).
    """
    if J_elem is None:
        if layout is None:
            raise ValueError("need J_elem or layout")
        J_elem = current_density_array(layout, mesh.regions)
    J_elem = np.broadcast_to(np.asarray(J_elem, dtype=float), (mesh.n_triangles,)).copy()
    system = _System(mesh, materials, J_elem)
    free = system.free
    scale_ref = float(np.max(np.abs(system.f))) or 1.0
    target = tol * scale_ref

    A = np.zeros(mesh.n_nodes)
    r, K, energy = system.state(A)
    rn = system.residual_norm(r)
    history, energies = [rn], [energy]
    damping = NewtonDamping()
    it = 1
    while rn > target:
        if it > max_newton:
            raise NonConvergence(f"Newton did not converge in {max_newton} iterations "
                                 f"(residual {rn:.3e}, target {target:.3e})", history)
        Kff = K[free][:, free]
        diag = Kff.diagonal()
        M = sp.diags(1.0 / diag)
        delta, info = cg(Kff, -r[free], rtol=cg_rtol, atol=0.0, M=M, maxiter=20 * len(diag))
        if info != 0:
            raise NonConvergence(f"CG failed (info={info}) at Newton iteration {it}", history)
        step = damping.scale
        while True:
            A_new = A.copy()
            A_new[free] += step * delta
            r_new, K_new, e_new = system.state(A_new)
            rn_new = system.residual_norm(r_new)
            increased = rn_new > rn
            if not increased or step <= MIN_STEP:
                break
            step = damping.update(True)
        if not increased:
            damping.update(False)
        A, r, K, rn = A_new, r_new, K_new, rn_new
        history.append(rn)
        energies.append(e_new)
        it += 1
        log.debug("newton %d: residual %.3e (step %.4g)", it, rn, step)
    return FemSolution(mesh, A, it, rn, history, energies)


def coenergy(solution: FemSolution, materials, J_elem) -> float:
    return _System(solution.mesh, materials, np.asarray(J_elem, float)).state(solution.A)[2]


# export


def write_mesh_csv(mesh: Mesh, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nodes.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,x,y,boundary\n")
        for k, ((x, y), b) in enumerate(zip(mesh.nodes, mesh.boundary)):
            fh.write(f"{k},{float(x)!r},{float(y)!r},{int(b)}\n")
    with open(out / "triangles.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n1,n2,n3,region\n")
        for (a, b, c), r in zip(mesh.triangles, mesh.regions):
            fh.write(f"{a},{b},{c},{int(r)}\n")


def write_solution_csv(solution: FemSolution, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "solution.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id,A\n")
        for k, a in enumerate(solution.A):
            fh.write(f"{k},{float(a)!r}\n")
    with open(out / "convergence.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,residual,coenergy\n")
        for k, (r, e) in enumerate(zip(solution.history, solution.energy_history)):
            fh.write(f"{k},{float(r)!r},{float(e)!r}\n")
