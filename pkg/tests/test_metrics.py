import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magpinn import fem, metrics
from magpinn.geometry import build_layout
from magpinn.materials import NU0, default_materials
from magpinn.problem import Problem
from magpinn.scaling import DeviceParams, default_constants


def test_relative_error_examples():
    a = np.array([0.0, 1.0, -2.0, 3.5])
    assert metrics.relative_mvp_error(a, a) == 0.0
    assert metrics.relative_mvp_error(a, np.zeros(4)) == 1.0
    assert metrics.relative_mvp_error(a, 1.01 * a) == pytest.approx(1e-4, rel=1e-10)
    with pytest.raises(metrics.DegenerateReference):
        metrics.relative_mvp_error(np.zeros(3), np.ones(3))


@given(st.integers(0, 2**32 - 1))
def test_relative_error_scale_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=20), rng.normal(size=20)
    c = default_constants()
    scaled = metrics.relative_mvp_error(c.scale_mvp(a) * 1.0, c.scale_mvp(b))
    assert scaled == pytest.approx(metrics.relative_mvp_error(a, b), rel=1e-13)


def test_percentiles_match_sort_oracle(rng):
    for n in (1, 2, 7, 100):
        v = rng.normal(size=n)
        s = np.sort(v)
        for q in (2.5, 50.0, 97.5):
            pos = q / 100 * (n - 1)
            lo = int(np.floor(pos))
            hi = min(lo + 1, n - 1)
            ref = s[lo] + (pos - lo) * (s[hi] - s[lo])
            assert metrics.percentiles(v, (q,))[0] == pytest.approx(ref, rel=1e-14, abs=1e-15)
    p = metrics.percentiles(rng.normal(size=50))
    assert p[0] <= p[1] <= p[2]


class Uniform:
    def __init__(self, bx, by, where=None):
        self.bx, self.by, self.where = bx, by, where

    def __call__(self, pts):
        n = len(pts)
        mask = np.ones(n, bool) if self.where is None else self.where(pts)
        return np.zeros(n), np.where(mask, self.bx, 0.0), np.where(mask, self.by, 0.0)


@pytest.fixture(scope="module")
def layout_xi():
    xi = DeviceParams.midpoint()
    return build_layout(xi), xi


def test_path_geometry(layout_xi):
    lay, xi = layout_xi
    p = metrics.MstPath.around_icore(lay, xi.g, 200)
    assert p.a.start[1] == pytest.approx(lay.i_core.y0 - xi.g / 2)
    assert p.c.start[1] == pytest.approx(lay.i_core.y1 + xi.g / 2)
    assert p.b.start[0] == pytest.approx(lay.w_dev + xi.g / 2)
    for s in (p.a, p.c):
        assert s.start[0] == 0.0 and s.end[0] == pytest.approx(lay.w_dev + xi.g / 2)
    for s in (p.a, p.b, p.c):
        assert s.n * s.spacing == pytest.approx(s.length, rel=1e-15)
        pts = s.points()
        assert len(pts) == 200


def test_path_outside_domain(layout_xi):
    lay, xi = layout_xi
    with pytest.raises(metrics.PathOutsideDomain):
        metrics.MstPath.around_icore(lay, 0.02, 10)


def test_force_examples(layout_xi):
    lay, xi = layout_xi
    p = metrics.MstPath.around_icore(lay, xi.g, 200)
    assert metrics.mst_force(Uniform(0.0, 0.0), p) == 0.0
    assert metrics.mst_force(Uniform(0.0, 1.3), p) == pytest.approx(0.0, abs=1e-9)
    ya = p.a.start[1]
    only_a = Uniform(0.0, 0.8, where=lambda q: np.isclose(q[:, 1], ya) & (q[:, 0] < p.a.end[0]))
    assert metrics.mst_force(only_a, p) == pytest.approx(NU0 * p.a.length * 0.64, rel=1e-12)


def test_force_refinement_invariance(layout_xi):
    lay, xi = layout_xi

    def smooth(q):
        x, y = q[:, 0], q[:, 1]
        return np.zeros(len(q)), 0.3 * np.sin(40 * y) + 0.1, np.cos(30 * x) * (1 + 5 * y)

    f1 = metrics.mst_force(smooth, metrics.MstPath.around_icore(lay, xi.g, 100))
    f2 = metrics.mst_force(smooth, metrics.MstPath.around_icore(lay, xi.g, 200))
    assert abs(f2 - f1) <= 0.01 * abs(f2)


def test_mec_oracle_values():
    xi = DeviceParams.midpoint().replace(g=1e-3)
    phi = metrics.mec_flux(xi)
    r = xi.g * NU0 / xi.w_c + xi.g * NU0 / (2 * xi.w_e)
    assert phi == pytest.approx(xi.f_c / r, rel=1e-15)
    assert metrics.mec_force(xi) == pytest.approx(127_234.5, rel=1e-5)
    assert phi / xi.w_c == pytest.approx(2.827, rel=1e-3)


@pytest.fixture(scope="module")
def fe_solution(layout_xi):
    lay, xi = layout_xi
    mesh = fem.build_mesh(lay, 1e-6)
    return fem.solve(mesh, default_materials(), layout=lay)


def test_absolute_fields(fe_solution, layout_xi, tmp_path):
    lay, _ = layout_xi
    ev = metrics.FemEvaluator(fe_solution)
    same = metrics.absolute_error_fields(fe_solution, ev, lay)
    assert np.all(same.e_a == 0) and np.all(same.e_b == 0)
    zero = metrics.absolute_error_fields(fe_solution, lambda q: (np.zeros(len(q)),) * 3, lay)
    assert zero.e_a.max() == np.abs(fe_solution.A).max()
    zero.write_csv(tmp_path)
    head = (tmp_path / "fields_nodes.csv").read_text().splitlines()[0]
    assert head == "x,y,region,A_FE,A_PINN,e_A_abs,flag"
    flags = np.loadtxt(tmp_path / "fields_midpoints.csv", delimiter=",", skiprows=1)[:, -1]
    assert np.array_equal(flags.astype(bool), zero.e_b > metrics.B_ABS_FLAG)


def test_suite_self_comparison(tmp_path):
    rep = metrics.evaluate_suite(metrics.self_factory, 2, seed=1, max_area=1e-6, out_dir=tmp_path)
    assert np.all(rep.e_a == 0) and np.all(rep.e_f == 0)
    assert (tmp_path / "report.csv").exists() and (tmp_path / "summary.txt").exists()
    one = metrics.evaluate_suite(metrics.self_factory, 1, seed=1, max_area=1e-6)
    assert len(set(metrics.percentiles(one.e_a))) == 1


def test_suite_records_fe_failures(monkeypatch):
    def boom(*a, **k):
        raise fem.NonConvergence("forced", [1.0, 2.0])

    monkeypatch.setattr(fem, "solve", boom)
    rep = metrics.evaluate_suite(metrics.self_factory, 2, seed=0, max_area=4e-6)
    assert rep.n_failed == 2 and len(rep.ok) == 0
    assert np.isnan(rep.mean_e_a)


def test_sample_designs_reproducible():
    p = Problem(free=("g", "f_c"))
    a = metrics.sample_designs(p, 3, 7)
    b = metrics.sample_designs(p, 3, 7)
    assert [x.as_vector().tobytes() for x in a] == [x.as_vector().tobytes() for x in b]
