"""Pure-numpy implementations of the inner-loop kernels.

Same signatures and results as the compiled ``_kernels`` extension; used when
the extension is unavailable or ``MAGPINN_PURE_PYTHON=1`` is set.
"""
import numpy as np

CORE, WINDING, AIR = 0, 1, 2


def classify(x, y, rects, codes):
    """Region code per point; first matching half-open rectangle wins, else AIR."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(x.shape, AIR, dtype=np.int8)
    done = np.zeros(x.shape, dtype=bool)
    for (x0, x1, y0, y1), c in zip(rects, codes):
        hit = ~done & (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        out[hit] = c
        done |= hit
    return out


def steel_eval(s, knots, coef, e_off, nu_low, h_max, b_max, nu0):
    """Reluctivity, its s-derivative and the energy density at squared flux s.

    ``knots`` holds the n+1 spline abscissae in s = B^2, ``coef`` the (n, 4)
    cubic coefficients in the local variable t = s - knots[k] and ``e_off`` the
    n+1 energy values at the knots.
    """
    s = np.asarray(s, dtype=float)
    nu = np.empty_like(s)
    dnu = np.empty_like(s)
    w = np.empty_like(s)
    s_min = knots[0]
    s_max = knots[-1]

    low = s < s_min
    nu[low] = nu_low
    dnu[low] = 0.0
    w[low] = 0.5 * nu_low * s[low]

    high = s >= s_max
    sh = s[high]
    r = np.sqrt(sh)
    k = h_max - nu0 * b_max
    nu[high] = nu0 + k / r
    dnu[high] = -0.5 * k / (sh * r)
    w[high] = e_off[-1] + 0.5 * (nu0 * (sh - s_max) + 2.0 * k * (r - np.sqrt(s_max)))

    mid = ~(low | high)
    sm = s[mid]
    seg = np.searchsorted(knots, sm, side="right") - 1
    seg = np.clip(seg, 0, len(knots) - 2)
    t = sm - knots[seg]
    c0, c1, c2, c3 = coef[seg, 0], coef[seg, 1], coef[seg, 2], coef[seg, 3]
    nu[mid] = c0 + t * (c1 + t * (c2 + t * c3))
    dnu[mid] = c1 + t * (2.0 * c2 + t * 3.0 * c3)
    w[mid] = e_off[seg] + 0.5 * t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
    return nu, dnu, w


def element_tangent(gx, gy, a_loc, nu, dnu, area):
    """Local residual (ne, 3) and consistent tangent (ne, 3, 3) of linear triangles.

    ``gx``/``gy`` are the constant basis-function gradients per element,
    ``a_loc`` the nodal potentials, ``nu``/``dnu`` the reluctivity and its
    derivative in s = |grad A|^2 evaluated at the element's s.
    """
    ax = np.einsum("ej,ej->e", gx, a_loc)
    ay = np.einsum("ej,ej->e", gy, a_loc)
    g = gx * ax[:, None] + gy * ay[:, None]
    res = (area * nu)[:, None] * g
    stiff = gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    K = (area * nu)[:, None, None] * stiff + (2.0 * area * dnu)[:, None, None] * (
        g[:, :, None] * g[:, None, :]
    )
    return res, K


def _sig(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def act_forward(a):
    """SiLU on a stacked (3, n, d) array of (value, d/dx, d/dy)."""
    z = a[0]
    s = _sig(z)
    d1 = s * (1.0 + z * (1.0 - s))
    return np.stack([z * s, d1 * a[1], d1 * a[2]])


def act_backward(a, g):
    """Adjoint of :func:`act_forward`: gradient w.r.t. the stacked input."""
    z = a[0]
    s = _sig(z)
    q = s * (1.0 - s)
    d1 = s + z * q
    d2 = q * (2.0 + z * (1.0 - 2.0 * s))
    return np.stack([g[0] * d1 + d2 * (g[1] * a[1] + g[2] * a[2]), g[1] * d1, g[2] * d1])


def gate_forward(z, u, v):
    """h = u + silu(z) * (v - u) with tangents, all stacked (3, n, d)."""
    s = act_forward(z)
    dvu = v - u
    h = np.empty_like(u)
    h[0] = u[0] + s[0] * dvu[0]
    h[1] = u[1] + s[1] * dvu[0] + s[0] * dvu[1]
    h[2] = u[2] + s[2] * dvu[0] + s[0] * dvu[2]
    return h


def gate_backward(z, u, v, gh, gu, gv):
    """Adjoint of :func:`gate_forward`; returns gz and adds into gu, gv in place."""
    s = act_forward(z)
    dvu = v - u
    gs = np.empty_like(z)
    gs[0] = gh[0] * dvu[0] + gh[1] * dvu[1] + gh[2] * dvu[2]
    gs[1] = gh[1] * dvu[0]
    gs[2] = gh[2] * dvu[0]
    one_m = 1.0 - s[0]
    gu[0] += gh[0] * one_m - gh[1] * s[1] - gh[2] * s[2]
    gv[0] += gh[0] * s[0] + gh[1] * s[1] + gh[2] * s[2]
    gu[1] += gh[1] * one_m
    gv[1] += gh[1] * s[0]
    gu[2] += gh[2] * one_m
    gv[2] += gh[2] * s[0]
    return act_backward(z, gs)
