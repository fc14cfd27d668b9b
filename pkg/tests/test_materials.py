import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from magpinn.geometry import build_layout
from magpinn.materials import (NU0, TABLE_II, BHCurve, LinearMaterial, NonMonotoneData,
                               build_reluctivity, default_materials, reluctivity_at)
from magpinn.scaling import DeviceParams, default_constants


@pytest.fixture(scope="module")
def steel():
    return build_reluctivity(BHCurve.table2())


def test_knot_examples(steel):
    assert steel.nu(0.7**2) == pytest.approx(100.0, rel=1e-15)
    assert steel.nu(2.1**2) == pytest.approx(65520.0 / 2.1, rel=1e-15)


def test_interpolates_all_knots(steel):
    H, B = np.array(TABLE_II).T
    nu = steel.nu(B**2)
    ulp = np.spacing(H / B)
    assert np.all(np.abs(nu - H / B) <= 2 * ulp)


def test_extrapolation(steel):
    assert steel.nu(0.25) == 100.0
    expected = (65520.0 + NU0 * (3.0 - 2.1)) / 3.0
    assert steel.nu(9.0) == pytest.approx(expected, rel=1e-12)
    assert steel.nu(9.0) == pytest.approx(260572.4, rel=1e-6)
    assert steel.nu(1e20) == pytest.approx(NU0, rel=1e-5)


def test_monotone_dense(steel):
    s = np.linspace(0.0, 25.0, 100_000)
    assert np.all(np.diff(steel.nu(s)) >= 0.0)


def test_continuity_at_range_ends(steel):
    for s0 in (0.49, 4.41):
        lo, hi = steel.nu(s0 * (1 - 1e-13)), steel.nu(s0 * (1 + 1e-13))
        assert abs(lo - hi) <= 1e-9 * abs(hi)


def test_energy_matches_quadrature(steel, rng):
    assert steel.energy(0.0) == 0.0
    knots = list(BHCurve.table2().s)
    for s in rng.uniform(1e-4, 16.0, 100):
        ref, _ = quad(lambda t: 0.5 * float(steel.nu(t)), 0.0, s, points=[k for k in knots if k < s],
                      epsabs=0, epsrel=1e-13, limit=200)
        assert abs(steel.energy(s) - ref) <= 1e-10 * ref


def test_energy_derivative_is_half_nu(steel, rng):
    s = rng.uniform(0.01, 16.0, 50)
    h = 1e-6 * s
    num = (steel.energy(s + h) - steel.energy(s - h)) / (2 * h)
    np.testing.assert_allclose(num, 0.5 * steel.nu(s), rtol=1e-6)


def test_dnu_matches_finite_difference(steel, rng):
    s = rng.uniform(0.5, 16.0, 50)
    s = s[np.min(np.abs(s[:, None] - BHCurve.table2().s[None, :]), axis=1) > 1e-3]
    h = 1e-7
    num = (steel.nu(s + h) - steel.nu(s - h)) / (2 * h)
    np.testing.assert_allclose(steel.dnu(s), num, rtol=1e-5, atol=1e-3)


def test_scaled_range(steel):
    c = default_constants()
    s = np.linspace(0.49, 4.41, 10_000)
    nu_bar = steel.nu(s) / c.nu_star
    assert nu_bar.min() >= 0.05 and nu_bar.max() <= 100.0


def test_constant_curve_is_linear():
    model = build_reluctivity(BHCurve([100.0, 200.0], [1.0, 2.0]))
    s = np.array([0.5, 1.0, 2.5, 4.0])
    np.testing.assert_allclose(model.nu(s), 100.0, rtol=1e-15)
    np.testing.assert_allclose(model.energy(s), 50.0 * s, rtol=1e-14)


def test_non_monotone_rejected():
    with pytest.raises(NonMonotoneData):
        build_reluctivity(BHCurve([100.0, 110.0, 200.0], [1.0, 1.5, 2.0]))
    with pytest.raises(NonMonotoneData):
        BHCurve([1.0, 2.0], [2.0, 1.0])


def test_from_file(tmp_path):
    p = tmp_path / "bh.txt"
    p.write_text("# H B\n" + "\n".join(f"{h} {b}" for h, b in TABLE_II) + "\n")
    c = BHCurve.from_file(p)
    np.testing.assert_array_equal(c.B, BHCurve.table2().B)


def test_linear_material():
    m = LinearMaterial(3.0)
    nu, dnu, w = m.evaluate(np.array([0.0, 2.0]))
    assert list(nu) == [3.0, 3.0] and list(dnu) == [0.0, 0.0] and list(w) == [0.0, 3.0]


def test_reluctivity_at_regions():
    xi = DeviceParams.midpoint()
    lay = build_layout(xi)
    mats = default_materials()
    assert reluctivity_at((0.001, 0.001), xi, 1.0, lay, mats) == pytest.approx(795774.715, rel=1e-9)
    assert reluctivity_at(lay.winding.center, xi, 1.0, lay, mats) == NU0
    assert reluctivity_at(lay.e_base.center, xi, 0.49, lay, mats) == pytest.approx(100.0)


@given(st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_energy_monotone_property(a, b):
    steel = build_reluctivity(BHCurve.table2())
    lo, hi = sorted((a, b))
    assert steel.energy(hi) >= steel.energy(lo)
    assert steel.nu(hi) >= steel.nu(lo)
