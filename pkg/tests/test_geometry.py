import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magpinn.geometry import (B_X, B_Y, OutsideDomain, Region, build_layout, current_density,
                              domain_lengths, domain_lengths_array, sample_points)
from magpinn.scaling import PARAM_MAX, PARAM_MIN, PARAM_NAMES, DeviceParams

design = st.builds(
    lambda u: DeviceParams(**{n: PARAM_MIN[n] + ui * (PARAM_MAX[n] - PARAM_MIN[n])
                              for n, ui in zip(PARAM_NAMES, u)}),
    st.lists(st.floats(0.0, 1.0), min_size=10, max_size=10))


def test_lengths_examples():
    xi = DeviceParams.from_table_units(w_i=1, w_c=2, w_e=1, w_b=1, w_w=1.5, d_w=5, c_w=2, c_d=2, g=3,
                                       f_c=4500)
    L_x, L_y = domain_lengths(xi)
    assert L_x == pytest.approx(0.042, rel=1e-14)
    assert L_y == pytest.approx(0.085, rel=1e-14)
    assert domain_lengths(DeviceParams(**PARAM_MAX))[1] == pytest.approx(0.111, rel=1e-14)


def test_vectorized_lengths_match():
    xi = DeviceParams.midpoint()
    lx, ly = domain_lengths_array(xi.as_vector())
    assert (lx[0], ly[0]) == domain_lengths(xi)


def test_classify_examples():
    xi = DeviceParams.midpoint()
    lay = build_layout(xi)
    assert lay.classify((0.0, 0.0)) == Region.AIR
    assert lay.classify(lay.winding.center) == Region.WINDING
    assert lay.classify(lay.gap_band.center) == Region.AIR
    assert lay.classify(lay.i_core.center) == Region.CORE
    with pytest.raises(OutsideDomain):
        lay.classify((-1e-9, 0.01))
    with pytest.raises(OutsideDomain):
        lay.classify((0.01, lay.L_y + 1e-9))


def test_current_density_example():
    xi = DeviceParams.midpoint().replace(f_c=4500.0, w_w=0.015, d_w=0.05)
    lay = build_layout(xi)
    assert current_density(lay, xi, lay.winding.center) == pytest.approx(6e6, rel=1e-14)
    assert current_density(lay, xi, lay.e_base.center) == 0.0
    assert current_density(lay, xi, (0.001, 0.001)) == 0.0


@given(design)
def test_layout_invariants(xi):
    lay = build_layout(xi)
    L_x, L_y = domain_lengths(xi)
    assert lay.L_x == L_x and lay.L_y == L_y
    margin = min(B_X, B_Y) * (1 - 1e-12)
    rects = list(lay.cores) + [lay.winding]
    for r in rects:
        assert r.x0 >= 0.0 and r.x1 <= L_x - margin and r.y0 >= margin and r.y1 <= L_y - margin
    for i, a in enumerate(rects):
        for b in rects[i + 1:]:
            overlap_x = min(a.x1, b.x1) - max(a.x0, b.x0)
            overlap_y = min(a.y1, b.y1) - max(a.y0, b.y0)
            assert overlap_x <= 1e-15 or overlap_y <= 1e-15


@given(design, st.floats(0.0, 1e-3))
def test_gap_monotone(xi, delta):
    a = build_layout(xi)
    b = build_layout(DeviceParams.unchecked(**{**{n: getattr(xi, n) for n in PARAM_NAMES},
                                             "g": xi.g + delta}))
    assert b.L_y - a.L_y == pytest.approx(delta, abs=1e-15)
    assert b.i_core.y0 - a.i_core.y0 == pytest.approx(delta, abs=1e-15)


def test_classify_consistent_with_rectangles(rng):
    lay = build_layout(DeviceParams.midpoint())
    p = sample_points(lay, 1_000_000, rng)
    codes = lay.classify_array(p[:, 0], p[:, 1])
    expect = np.full(len(p), int(Region.AIR))
    inside_w = ((p[:, 0] >= lay.winding.x0) & (p[:, 0] < lay.winding.x1)
                & (p[:, 1] >= lay.winding.y0) & (p[:, 1] < lay.winding.y1))
    expect[inside_w] = int(Region.WINDING)
    for r in lay.cores:
        inside = (p[:, 0] >= r.x0) & (p[:, 0] < r.x1) & (p[:, 1] >= r.y0) & (p[:, 1] < r.y1)
        expect[inside] = int(Region.CORE)
    np.testing.assert_array_equal(codes, expect)
    # Monte-Carlo winding area
    n = len(p)
    frac = inside_w.mean()
    area = frac * lay.L_x * lay.L_y
    sigma = np.sqrt(frac * (1 - frac) / n) * lay.L_x * lay.L_y
    assert abs(area - lay.winding.area) < 3 * sigma


def test_half_open_boundaries():
    lay = build_layout(DeviceParams.midpoint())
    w = lay.winding
    assert lay.classify((w.x0, w.y0)) == Region.WINDING
    assert lay.classify((w.x1, 0.5 * (w.y0 + w.y1))) == Region.AIR


def test_sample_points(rng):
    lay = build_layout(DeviceParams.midpoint())
    a = sample_points(lay, 4, np.random.default_rng(7))
    b = sample_points(lay, 4, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()
    n = 100_000
    p = sample_points(lay, n, rng)
    assert np.all((p >= 0) & (p <= [lay.L_x, lay.L_y]))
    for k, L in enumerate((lay.L_x, lay.L_y)):
        assert abs(p[:, k].mean() - L / 2) < 3 * L / np.sqrt(12 * n)
    with pytest.raises(ValueError):
        sample_points(lay, 0, rng)
