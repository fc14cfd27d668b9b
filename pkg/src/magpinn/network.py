"""Field approximator A_hat(x, xi) = D(x, xi) * N(x, xi; theta).

N is a modified residual network (two gated transformation layers u, v)
with SiLU activations, fed by a Fourier feature encoding of the scaled
position whose wavelengths are the scaled domain lengths. D vanishes on the
domain boundary, so the zero Dirichlet condition holds exactly.

Batches are row-major: points have shape (n, 2), encodings (n, d0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Dual2

CHECKPOINT_FORMAT = "magpinn-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    L: int
    d: int
    m: int
    d_xi: int = 10

    def __post_init__(self):
        if self.L < 1 or self.d < 1 or self.m < 0 or self.d_xi < 0:
            raise ValueError(f"invalid network configuration {self}")

    @property
    def n_fourier(self) -> int:
        return (2 * self.m + 1) ** 2

    @property
    def d0(self) -> int:
        return self.n_fourier + self.d_xi

    def param_shapes(self):
        """Ordered (name, shape) pairs; this order is also the checkpoint order."""
        d, d0 = self.d, self.d0
        shapes = [("W_u", (d, d0)), ("b_u", (d,)), ("W_v", (d, d0)), ("b_v", (d,)),
                  ("W_0", (d, d0)), ("b_0", (d,))]
        for k in range(1, self.L):
            shapes += [(f"W_{k}", (d, d)), (f"b_{k}", (d,))]
        shapes += [(f"W_{self.L}", (1, d)), (f"b_{self.L}", (1,))]
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes())


class NetworkParams:
    """theta: ordered list of float64 arrays matching ``config.param_shapes()``."""

    def __init__(self, config: NetworkConfig, arrays):
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        shapes = config.param_shapes()
        if len(arrays) != len(shapes):
            raise ShapeMismatch(f"expected {len(shapes)} arrays, got {len(arrays)}")
        for a, (name, shape) in zip(arrays, shapes):
            if a.shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {a.shape}")
        self.config = config
        self.arrays = arrays

    @property
    def names(self):
        return [n for n, _ in self.config.param_shapes()]

    def __getitem__(self, name):
        return self.arrays[self.names.index(name)]

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, [a.copy() for a in self.arrays])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def from_flat(cls, config, vec) -> "NetworkParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != config.n_params():
            raise ShapeMismatch(f"expected {config.n_params()} values, got {vec.size}")
        out, i = [], 0
        for _, shape in config.param_shapes():
            n = int(np.prod(shape))
            out.append(vec[i:i + n].reshape(shape).copy())
            i += n
        return cls(config, out)

    @classmethod
    def zeros(cls, config) -> "NetworkParams":
        return cls(config, [np.zeros(s) for _, s in config.param_shapes()])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays)))


def glorot_init(config: NetworkConfig, rng: np.random.Generator) -> NetworkParams:
    """Normal weights with std sqrt(2 / (fan_in + fan_out)); zero biases."""
    arrays = []
    for name, shape in config.param_shapes():
        if name.startswith("W"):
            fan_out, fan_in = shape
            arrays.append(rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape))
        else:
            arrays.append(np.zeros(shape))
    return NetworkParams(config, arrays)


def fourier_features(t, lam, m):
    """(1, cos(2 pi j t / lam), sin(2 pi j t / lam), ...) and its t-derivative.

    ``t`` and ``lam`` have shape (n,); returns two (n, 2m+1) arrays.
    """
    t = np.asarray(t, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), t.shape)
    n = t.shape[0]
    phi = np.empty((n, 2 * m + 1))
    dphi = np.empty((n, 2 * m + 1))
    phi[:, 0] = 1.0
    dphi[:, 0] = 0.0
    for j in range(1, m + 1):
        k = 2.0 * j * np.pi / lam
        arg = k * t
        c, s = np.cos(arg), np.sin(arg)
        phi[:, 2 * j - 1] = c
        phi[:, 2 * j] = s
        dphi[:, 2 * j - 1] = -k * s
        dphi[:, 2 * j] = k * c
    return phi, dphi


def encode(points, xi_scaled, config: NetworkConfig, lengths) -> Dual2:
    """Input layer h0 = (vec(phi_x phi_y^T), xi) with its exact spatial tangents.

    ``points`` are scaled coordinates (n, 2); ``lengths`` the scaled domain
    lengths used as wavelengths, shape (n, 2) or (2,); ``xi_scaled`` (n, d_xi)
    or (d_xi,).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (n, 2))
    xi = np.broadcast_to(np.asarray(xi_scaled, dtype=float).reshape(-1, config.d_xi)
                         if config.d_xi else np.zeros((1, 0)), (n, config.d_xi))
    m = config.m
    px, dpx = fourier_features(points[:, 0], lengths[:, 0], m)
    py, dpy = fourier_features(points[:, 1], lengths[:, 1], m)
    k = 2 * m + 1
    # column stacking: entry j*k + i is phi_x[i] * phi_y[j]
    val = np.empty((n, config.d0))
    dx = np.zeros((n, config.d0))
    dy = np.zeros((n, config.d0))
    nf = k * k
    val[:, :nf] = (py[:, :, None] * px[:, None, :]).reshape(n, nf)
    dx[:, :nf] = (py[:, :, None] * dpx[:, None, :]).reshape(n, nf)
    dy[:, :nf] = (dpy[:, :, None] * px[:, None, :]).reshape(n, nf)
    val[:, nf:] = xi
    return Dual2(val, dx, dy)


def forward(params, config: NetworkConfig, h0):
    """ModResNet forward pass.

    ``params`` is any sequence of arrays or :class:`~magpinn.autodiff.Var` in
    ``param_shapes`` order; ``h0`` an array or :class:`Dual2`. Returns shape (n, 1).
    """
    p = list(params)
    if len(p) != len(config.param_shapes()):
        raise ShapeMismatch("parameter list does not match the configuration")
    d0 = h0.val.shape[-1] if isinstance(h0, Dual2) else np.shape(h0)[-1]
    if d0 != config.d0:
        raise ShapeMismatch(f"input width {d0} != d0 = {config.d0}")
    u = ad.silu(ad.linear(h0, p[0], p[1]))
    v = ad.silu(ad.linear(h0, p[2], p[3]))
    v_minus_u = v - u
    h = h0
    for k in range(config.L):
        s = ad.silu(ad.linear(h, p[4 + 2 * k], p[5 + 2 * k]))
        h = u + s * v_minus_u  # (1 - s) u + s v
    return ad.linear(h, p[-2], p[-1])


def boundary_multiplier(points, lengths) -> Dual2:
    """D = x y (Lx - x)(Ly - y) and its analytic gradient, for scaled points (n, 2)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lengths = np.broadcast_to(np.asarray(lengths, dtype=float), points.shape)
    x, y = points[:, 0], points[:, 1]
    lx, ly = lengths[:, 0], lengths[:, 1]
    fx = x * (lx - x)
    fy = y * (ly - y)
    return Dual2(fx * fy, (lx - 2.0 * x) * fy, fx * (ly - 2.0 * y))


def mvp_dual(params, config, points, xi_scaled, lengths) -> Dual2:
    """A_hat as a Dual2 of column vectors (n, 1); params may be Var leaves."""
    h0 = encode(points, xi_scaled, config, lengths)
    N = forward(params, config, h0)
    D = boundary_multiplier(points, lengths)
    D = Dual2(D.val[:, None], D.dx[:, None], D.dy[:, None])
    return D * N


def evaluate_mvp(params, config, points, xi_scaled, lengths):
    """Scaled potential (n,) and its scaled spatial gradient (n, 2)."""
    a = mvp_dual(list(params), config, points, xi_scaled, lengths)
    return a.val[:, 0], np.stack([a.dx[:, 0], a.dy[:, 0]], axis=1)


def flux_density(grad_scaled, B_star):
    """Physical (B_x, B_y) from the scaled gradient: B = curl(A k)."""
    g = np.asarray(grad_scaled)
    return B_star * g[..., 1], -B_star * g[..., 0]


# checkpoints


def save_checkpoint(path, params: NetworkParams, scaling, problem_dict=None, extra=None):
    """Write a JSON checkpoint. Floats are serialised with round-trip repr."""
    cfg = params.config
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "network": {"L": cfg.L, "d": cfg.d, "m": cfg.m, "d_xi": cfg.d_xi},
        "scaling": scaling.to_dict(),
        "problem": problem_dict or {},
        "extra": extra or {},
        "params": {n: a.ravel().tolist() for n, a in zip(params.names, params.arrays)},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Return ``(params, scaling, problem_dict, extra)``; raise CheckpointError on any mismatch."""
    from .scaling import ScalingConstants

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} document")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        net = doc["network"]
        cfg = NetworkConfig(int(net["L"]), int(net["d"]), int(net["m"]), int(net["d_xi"]))
        arrays = []
        for name, shape in cfg.param_shapes():
            vals = np.asarray(doc["params"][name], dtype=float)
            if vals.size != int(np.prod(shape)):
                raise CheckpointError(f"{path}: {name} has {vals.size} values, expected {shape}")
            arrays.append(vals.reshape(shape))
        if set(doc["params"]) != set(cfg_names := [n for n, _ in cfg.param_shapes()]):
            extra_names = sorted(set(doc["params"]) - set(cfg_names))
            raise CheckpointError(f"{path}: unexpected arrays {extra_names}")
        scaling = ScalingConstants.from_dict(doc["scaling"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: malformed checkpoint: {exc}") from exc
    return NetworkParams(cfg, arrays), scaling, doc.get("problem", {}), doc.get("extra", {})
