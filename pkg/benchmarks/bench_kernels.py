"""Time the compiled kernels against the numpy reference implementations.

Usage: python benchmarks/bench_kernels.py [--n 64000] [--repeat 20]

Also times one fused loss-and-gradient evaluation (L=3, d=64, m=3,
N_x=1000) with each backend.
"""
import argparse
import timeit

import numpy as np

from magpinn import _kernels_py, kernels
from magpinn.geometry import build_layout
from magpinn.materials import build_reluctivity, BHCurve
from magpinn.network import NetworkConfig, glorot_init
from magpinn.problem import Problem
from magpinn.scaling import DeviceParams
from magpinn.training import loss_and_grad, stream

try:
    from magpinn import _kernels
except ImportError:
    _kernels = None

NAMES = ("act_forward", "act_backward", "gate_forward", "gate_backward", "steel_eval", "classify",
         "element_tangent")


def cases(n, rng):
    d = 64
    rows = max(1, n // d)
    a = rng.normal(size=(3, rows, d))
    u, v, g = (rng.normal(size=(3, rows, d)) for _ in range(3))
    steel = build_reluctivity(BHCurve.table2())
    s = rng.uniform(0.0, 6.0, n)
    lay = build_layout(DeviceParams.midpoint())
    rects, codes = lay._rect_table()
    x = rng.uniform(0, lay.L_x, n)
    y = rng.uniform(0, lay.L_y, n)
    gx, gy, al = (rng.normal(size=(n, 3)) for _ in range(3))
    nu, dnu, area = rng.uniform(1, 2, n), rng.uniform(0, 1, n), rng.uniform(1e-7, 2e-7, n)
    return {
        "act_forward": (a,),
        "act_backward": (a, g),
        "gate_forward": (a, u, v),
        "gate_backward": (a, u, v, g, np.zeros_like(u), np.zeros_like(v)),
        "steel_eval": (s, steel.knots, steel.coef, steel.e_off, steel.nu_low, steel.h_max, steel.b_max,
                       steel.nu0),
        "classify": (x, y, rects, codes),
        "element_tangent": (gx, gy, al, nu, dnu, area),
    }


def best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def fused_step(repeat):
    problem = Problem(free=())
    cfg = NetworkConfig(3, 64, 3, 0)
    p = glorot_init(cfg, np.random.default_rng(0))
    batch = problem.sample_batch(1, 1000, stream(0, 1), stream(0, 2))
    return best(lambda: loss_and_grad(p, problem, batch), (), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64_000, help="elements per kernel call")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the numpy reference can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'compiled [ms]':>15}{'speed-up':>10}")
    for name, call_args in cases(args.n, rng).items():
        t_py = best(getattr(_kernels_py, name), call_args, args.repeat)
        if _kernels is None:
            print(f"{name:<16}{1e3 * t_py:>12.3f}{'-':>15}{'-':>10}")
            continue
        t_c = best(getattr(_kernels, name), call_args, args.repeat)
        print(f"{name:<16}{1e3 * t_py:>12.3f}{1e3 * t_c:>15.3f}{t_py / t_c:>9.1f}x")

    timings = {}
    saved = {n: getattr(kernels, n) for n in NAMES}
    try:
        for label, impl in (("numpy", _kernels_py), ("compiled", _kernels)):
            if impl is None:
                continue
            for n in NAMES:
                setattr(kernels, n, getattr(impl, n))
            timings[label] = fused_step(max(3, args.repeat // 4))
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)
    line = "  ".join(f"{k} {1e3 * v:.1f} ms" for k, v in timings.items())
    print(f"loss+gradient (L=3, d=64, m=3, N_x=1000): {line}")


if __name__ == "__main__":
    main()
