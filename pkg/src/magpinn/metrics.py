"""Error measures against the FE oracle and Maxwell-stress force on the I-core.

A field evaluator is any callable mapping physical points (n, 2) to
``(A, B_x, B_y)`` arrays in SI units. FE solutions and trained networks are
both wrapped this way so every metric treats them alike.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fem
from .geometry import build_layout
from .materials import NU0
from .network import evaluate_mvp, flux_density, load_checkpoint
from .problem import Problem
from .scaling import PARAM_NAMES, DeviceParams

log = logging.getLogger(__name__)

A_ABS_FLAG = 0.18e-3  # Wb/m
B_ABS_FLAG = 40e-3  # T
STREAM_EVAL = 3
PERCENTILES = (2.5, 50.0, 97.5)


def csv_numbers(*values) -> str:
    """Comma-joined round-trip decimal representation."""
    return ",".join(repr(float(v)) for v in values)


class DegenerateReference(ValueError):
    pass


class PathOutsideDomain(ValueError):
    pass


# evaluators


class FemEvaluator:
    def __init__(self, solution: fem.FemSolution):
        self.solution = solution

    def __call__(self, points):
        return self.solution.evaluate_many(points)


class PinnEvaluator:
    """Trained network at one design, in physical units."""

    def __init__(self, params, problem: Problem, xi: DeviceParams):
        self.params = params
        self.problem = problem
        self.scaling = problem.scaling
        self.xi_scaled = problem.scaling.normalize_params_unchecked(xi)[problem.free_idx]
        layout = build_layout(xi)
        self.lengths = np.array([layout.L_x, layout.L_y]) / self.scaling.x_star

    def __call__(self, points):
        c = self.scaling
        p = np.atleast_2d(np.asarray(points, dtype=float)) / c.x_star
        xs = np.broadcast_to(self.xi_scaled, (len(p), len(self.xi_scaled)))
        a, grad = evaluate_mvp(self.params, self.params.config, p, xs, self.lengths)
        bx, by = flux_density(grad, c.B_star)
        return c.unscale_mvp(a), bx, by


# MVP errors


def relative_mvp_error(a_fe, a_pinn) -> float:
    """sum (A_FE - A_PINN)^2 / sum A_FE^2 over the FE nodes."""
    a_fe = np.asarray(a_fe, dtype=float)
    den = float(np.sum(a_fe * a_fe))
    if den == 0.0:
        raise DegenerateReference("reference potential vanishes identically")
    d = a_fe - np.asarray(a_pinn, dtype=float)
    return float(np.sum(d * d)) / den


def relative_mvp_error_fields(solution: fem.FemSolution, evaluator) -> float:
    a_pinn, _, _ = evaluator(solution.mesh.nodes)
    return relative_mvp_error(solution.A, a_pinn)


@dataclass
class AbsoluteErrors:
    nodes: np.ndarray
    node_regions: np.ndarray
    a_fe: np.ndarray
    a_pinn: np.ndarray
    midpoints: np.ndarray
    b_fe: np.ndarray
    b_pinn: np.ndarray

    @property
    def e_a(self):
        return np.abs(self.a_fe - self.a_pinn)

    @property
    def e_b(self):
        return np.abs(self.b_fe - self.b_pinn)

    def write_csv(self, out_dir, stem="fields"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{stem}_nodes.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y,region,A_FE,A_PINN,e_A_abs,flag\n")
            for (x, y), r, a, b, e in zip(self.nodes, self.node_regions, self.a_fe, self.a_pinn, self.e_a):
                fh.write(f"{csv_numbers(x, y)},{int(r)},{csv_numbers(a, b, e)},{int(e > A_ABS_FLAG)}\n")
        with open(out / f"{stem}_midpoints.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y,B_FE,B_PINN,e_B_abs,flag\n")
            for (x, y), a, b, e in zip(self.midpoints, self.b_fe, self.b_pinn, self.e_b):
                fh.write(f"{csv_numbers(x, y, a, b, e)},{int(e > B_ABS_FLAG)}\n")


def absolute_error_fields(solution: fem.FemSolution, evaluator, layout=None) -> AbsoluteErrors:
    """|A_FE - A_PINN| at the nodes, | |B_FE| - |B_PINN| | at triangle midpoints."""
    m = solution.mesh
    a_pinn, _, _ = evaluator(m.nodes)
    mid = m.centroids
    bx_fe, by_fe = solution.element_b()
    _, bx, by = evaluator(mid)
    if layout is not None:
        node_regions = layout.classify_array(m.nodes[:, 0], m.nodes[:, 1])
    else:
        node_regions = np.full(m.n_nodes, -1)
    return AbsoluteErrors(m.nodes, node_regions, solution.A.copy(), np.asarray(a_pinn), mid,
                          np.hypot(bx_fe, by_fe), np.hypot(bx, by))


# force


@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple
    n: int

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    def points(self) -> np.ndarray:
        t = (np.arange(self.n) + 0.5) / self.n
        s, e = np.asarray(self.start), np.asarray(self.end)
        return s + t[:, None] * (e - s)


@dataclass(frozen=True)
class MstPath:
    a: Segment  # below the I-core, mid-gap
    b: Segment  # right of the I-core
    c: Segment  # above the I-core

    @classmethod
    def around_icore(cls, layout, g: float, n: int = 200) -> "MstPath":
        if n < 1:
            raise ValueError("need at least one point per segment")
        ic = layout.i_core
        y_a = ic.y0 - 0.5 * g
        y_c = ic.y1 + 0.5 * g
        x_b = layout.w_dev + 0.5 * g
        path = cls(Segment((0.0, y_a), (x_b, y_a), n), Segment((x_b, y_a), (x_b, y_c), n),
                   Segment((0.0, y_c), (x_b, y_c), n))
        path.check_inside(layout)
        return path

    def check_inside(self, layout):
        for seg in (self.a, self.b, self.c):
            for x, y in (seg.start, seg.end):
                if not (0.0 <= x <= layout.L_x and 0.0 <= y <= layout.L_y):
                    raise PathOutsideDomain(f"path point ({x}, {y}) outside the domain")


def mst_force(evaluator, path: MstPath, nu0: float = NU0) -> float:
    """Vertical force per unit depth (N/m) on the I-core, positive towards the E-core.

    The prefactors already account for the mirrored half of the device.
    """
    _, bxa, bya = evaluator(path.a.points())
    _, bxb, byb = evaluator(path.b.points())
    _, bxc, byc = evaluator(path.c.points())
    fa = nu0 * path.a.spacing * np.sum(bya**2 - bxa**2)
    fb = 2.0 * nu0 * path.b.spacing * np.sum(bxb * byb)
    fc = nu0 * path.c.spacing * np.sum(bxc**2 - byc**2)
    return float(fa + fb + fc)


def mec_flux(xi: DeviceParams, nu0: float = NU0) -> float:
    """Gap flux per unit depth (Wb/m) from the two gap reluctances in series."""
    r_c = xi.g * nu0 / xi.w_c
    r_e = xi.g * nu0 / (2.0 * xi.w_e)
    return xi.f_c / (r_c + r_e)


def mec_force(xi: DeviceParams, nu0: float = NU0) -> float:
    phi = mec_flux(xi, nu0)
    return 0.5 * nu0 * (phi**2 / xi.w_c + phi**2 / (2.0 * xi.w_e))


def relative_force_error(f_ref, f) -> float:
    return abs(f_ref - f) / abs(f_ref)


def percentiles(values, q=PERCENTILES) -> np.ndarray:
    """Percentiles by linear interpolation between order statistics."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.full(len(q), np.nan)
    return np.percentile(v, q, method="linear")


# suite


@dataclass
class DesignResult:
    index: int
    xi: np.ndarray
    e_a: float = np.nan
    f_fe: float = np.nan
    f_pinn: float = np.nan
    e_f: float = np.nan
    failed: bool = False
    message: str = ""


@dataclass
class ErrorReport:
    results: list = field(default_factory=list)

    @property
    def ok(self):
        return [r for r in self.results if not r.failed]

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.results)

    @property
    def e_a(self) -> np.ndarray:
        return np.array([r.e_a for r in self.ok])

    @property
    def e_f(self) -> np.ndarray:
        return np.array([r.e_f for r in self.ok])

    @property
    def mean_e_a(self) -> float:
        return float(np.mean(self.e_a)) if self.ok else float("nan")

    @property
    def mean_e_f(self) -> float:
        return float(np.mean(self.e_f)) if self.ok else float("nan")

    def summary(self) -> str:
        pa = percentiles(self.e_a)
        pf = percentiles(self.e_f)
        lines = [
            f"designs: {len(self.results)} (failed FE: {self.n_failed})",
            f"mean relative MVP error: {float(self.mean_e_a)!r}",
            "MVP error percentiles 2.5/50/97.5: " + " ".join(repr(float(x)) for x in pa),
            f"mean relative force error: {float(self.mean_e_f)!r}",
            "force error percentiles 2.5/50/97.5: " + " ".join(repr(float(x)) for x in pf),
        ]
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("design," + ",".join(PARAM_NAMES) + ",e_A_rel,F_FE,F_PINN,e_F_rel,status\n")
            for r in self.results:
                vals = ",".join(repr(float(v)) for v in r.xi)
                status = "fe_failed" if r.failed else "ok"
                fh.write(f"{r.index},{vals},{csv_numbers(r.e_a, r.f_fe, r.f_pinn, r.e_f)},{status}\n")
        (out / "summary.txt").write_text(self.summary(), encoding="utf-8")


def evaluate_design(xi: DeviceParams, evaluator_factory, materials, max_area=0.25e-6, tol=1e-8,
                    n_path=200, index=0, fields_dir=None) -> DesignResult:
    """FE solve at one design and comparison against ``evaluator_factory(xi, solution)``."""
    res = DesignResult(index, xi.as_vector())
    layout = build_layout(xi)
    mesh = fem.build_mesh(layout, max_area)
    try:
        sol = fem.solve(mesh, materials, layout=layout, tol=tol)
    except fem.NonConvergence as exc:
        res.failed, res.message = True, str(exc)
        log.warning("design %d: %s", index, exc)
        return res
    fe_eval = FemEvaluator(sol)
    model = evaluator_factory(xi, sol)
    path = MstPath.around_icore(layout, xi.g, n_path)
    res.e_a = relative_mvp_error_fields(sol, model)
    res.f_fe = mst_force(fe_eval, path)
    res.f_pinn = mst_force(model, path)
    res.e_f = relative_force_error(res.f_fe, res.f_pinn)
    if fields_dir is not None:
        absolute_error_fields(sol, model, layout).write_csv(fields_dir, f"fields_{index:04d}")
    return res


def sample_designs(problem: Problem, n: int, seed: int):
    rng = np.random.default_rng([int(seed), STREAM_EVAL])
    xs = problem.sample_xi(n, rng)
    return [DeviceParams.from_vector(v) for v in problem.designs(xs)] if n else []


def evaluate_suite(model, n_designs: int, seed: int = 0, max_area: float = 0.25e-6, tol: float = 1e-8,
                   problem: Problem | None = None, out_dir=None, n_path: int = 200, fields=False,
                   designs=None) -> ErrorReport:
    """Compare a model with FE on ``n_designs`` designs drawn uniformly from the box.

    ``model`` is a checkpoint path or a factory ``(xi, fe_solution) -> evaluator``.
    """
    if isinstance(model, (str, Path)):
        params, scaling, pdict, _ = load_checkpoint(model)
        problem = Problem.from_dict(pdict, scaling=scaling) if pdict else Problem(scaling=scaling)

        def factory(xi, _sol):
            return PinnEvaluator(params, problem, xi)
    else:
        factory = model
        problem = problem if problem is not None else Problem()
    if designs is None:
        designs = sample_designs(problem, n_designs, seed)
    report = ErrorReport()
    for i, xi in enumerate(designs):
        fd = Path(out_dir) if (fields and out_dir is not None) else None
        r = evaluate_design(xi, factory, problem.materials, max_area, tol, n_path, i, fd)
        report.results.append(r)
        log.info("design %d: e_A=%.4g e_F=%.4g", i, r.e_a, r.e_f)
    if out_dir is not None:
        report.write(out_dir)
    return report


def self_factory(_xi, solution):
    """Model factory that returns the FE solution itself (zero-error check)."""
    return FemEvaluator(solution)
