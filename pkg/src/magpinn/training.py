"""Monte-Carlo coenergy loss, ADAM with exponential learning-rate decay, and the
training loop.

The per-sample loss is

    l = |Xi_bar| * |X_bar(xi)| * (w_bar(|grad A_hat|^2) - J_bar * A_hat)

with |Xi_bar| = 1 (unit hypercube) and |X_bar| = Lx_bar * Ly_bar.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import fused
from .network import NetworkConfig, NetworkParams, ShapeMismatch, glorot_init, mvp_dual, save_checkpoint
from .problem import Batch, Problem

log = logging.getLogger(__name__)

XI_MEASURE = 1.0  # hypervolume of the normalized parameter box

STREAM_INIT, STREAM_XI, STREAM_X = 0, 1, 2


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration, theta_norm):
        super().__init__(f"non-finite loss at iteration {iteration} (|theta| = {theta_norm:.6g})")
        self.iteration = iteration
        self.theta_norm = theta_norm


def stream(seed: int, name: int) -> np.random.Generator:
    """Independent generator for one named sub-stream of the run seed."""
    return np.random.default_rng([int(seed), int(name)])


@dataclass
class TrainConfig:
    n_ite: int = 1000
    n_xi: int = 1
    n_x: int = 1000
    eta_1: float = 1e-3
    eta_final: float = 1e-6
    beta_1: float = 0.9
    beta_2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 1
    optimizer: str = "adam"
    threads: int = 1

    def __post_init__(self):
        if self.n_ite < 0 or self.n_xi < 1 or self.n_x < 1:
            raise ValueError("n_ite >= 0, n_xi >= 1 and n_x >= 1 are required")
        if not 0 < self.eta_final < self.eta_1:
            raise ValueError("need 0 < eta_final < eta_1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def gamma(self) -> float:
        return decay_factor(self.eta_1, self.eta_final, self.n_ite)


def decay_factor(eta_1, eta_final, n_ite) -> float:
    """Per-iteration factor taking eta_1 to eta_final in n_ite decay steps."""
    return (eta_final / eta_1) ** (1.0 / n_ite)


def learning_rate(k, eta_1, eta_final, n_ite) -> float:
    """eta_k = eta_1 * gamma**(k-1), evaluated in closed form.

    Evaluating the power through the exact log-ratio keeps the rate after the
    last update (k = n_ite + 1) equal to ``eta_final`` to rounding, which
    repeated multiplication by a rounded gamma would not.
    """
    if n_ite == 0:
        return eta_1
    return eta_1 * math.exp((k - 1) / n_ite * math.log(eta_final / eta_1))


# loss


def loss_terms(params, config: NetworkConfig, problem: Problem, batch: Batch):
    """Per-sample losses, shape (n, 1). ``params`` may be arrays or Var leaves."""
    A = mvp_dual(params, config, batch.points, batch.xi, batch.lengths)
    s = A.dx * A.dx + A.dy * A.dy
    s_val = s.value if isinstance(s, ad.Var) else np.asarray(s)
    w_val, w_der = problem.scaled_energy(batch.regions, s_val[:, 0])
    w = ad.elementwise(s, w_val[:, None], w_der[:, None])
    measure = (XI_MEASURE * batch.area)[:, None]
    return measure * (w - batch.current[:, None] * A.val)


def sample_loss(point_scaled, xi_scaled, params, config, problem: Problem) -> float:
    """Loss of a single collocation sample (scaled point, normalized free parameters)."""
    batch = problem.make_batch(np.atleast_2d(xi_scaled).reshape(1, problem.d_xi),
                               [np.atleast_2d(np.asarray(point_scaled, dtype=float))])
    return float(loss_terms(list(params), config, problem, batch)[0, 0])


def loss_estimate(params, config, problem, batch) -> float:
    """Batch average of the sample losses (unbiased estimate of the scaled functional)."""
    return float(np.mean(loss_terms(list(params), config, problem, batch)))


def _sum_and_grad(params, config, problem, batch):
    return ad.theta_gradient(lambda th: ad.vsum(loss_terms(th, config, problem, batch)), list(params))


def loss_and_grad(params: NetworkParams, problem: Problem, batch: Batch, threads: int = 1,
                  engine: str = "fused"):
    """Batch-mean loss and its exact theta-gradient (list aligned with params).

    ``engine='fused'`` uses the specialised pass in :mod:`magpinn.fused`;
    ``'tape'`` records the generic forward-over-reverse graph.
    """
    config = params.config
    n = len(batch)
    if engine == "fused":
        def one(b):
            return fused.loss_sum_and_grad(params, problem, b)
    elif engine == "tape":
        def one(b):
            return _sum_and_grad(params, config, problem, b)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if threads <= 1:
        total, grads = one(batch)
    else:
        parts = batch.chunks(threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, parts))
        total = sum(r[0] for r in results)
        grads = [sum(r[1][i] for r in results) for i in range(len(params))]
    return total / n, [g / n for g in grads]


# optimizer


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    eta: float = 0.0

    @classmethod
    def zeros_like(cls, params, eta=0.0):
        return cls([np.zeros_like(a) for a in params], [np.zeros_like(a) for a in params], 0, eta)


def adam_step(state: OptimizerState, params: NetworkParams, grads, eta, beta_1=0.9, beta_2=0.999,
              eps=1e-8):
    """One bias-corrected ADAM update, in place. Returns ``(params, state)``."""
    if len(grads) != len(params):
        raise ShapeMismatch("gradient does not match parameters")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta_1**t
    c2 = 1.0 - beta_2**t
    for a, g, m, v in zip(params.arrays, grads, state.m, state.v):
        if g.shape != a.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {a.shape}")
        m *= beta_1
        m += (1.0 - beta_1) * g
        v *= beta_2
        v += (1.0 - beta_2) * g * g
        a -= eta * (m / c1) / (np.sqrt(v / c2) + eps)
    state.eta = eta
    return params, state


def sgd_step(params: NetworkParams, grads, eta):
    for a, g in zip(params.arrays, grads):
        a -= eta * g
    return params


# loop


@dataclass
class TrainResult:
    params: NetworkParams
    history: list = field(default_factory=list)  # (iteration, eta, loss)
    wall_time: float = 0.0
    state: OptimizerState | None = None


def train(tc: TrainConfig, net: NetworkConfig, problem: Problem, out_dir=None,
          params: NetworkParams | None = None, progress=None) -> TrainResult:
    """Glorot init, then per iteration: sample designs and points, average the
    sample-loss gradients, update, decay the learning rate."""
    if net.d_xi != problem.d_xi:
        raise ShapeMismatch(f"network d_xi={net.d_xi} but problem has {problem.d_xi} free parameters")
    rng_init = stream(tc.seed, STREAM_INIT)
    rng_xi = stream(tc.seed, STREAM_XI)
    rng_x = stream(tc.seed, STREAM_X)
    if params is None:
        params = glorot_init(net, rng_init)
    state = OptimizerState.zeros_like(params, tc.eta_1)
    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "loss.csv", "w", encoding="utf-8", newline="\n")
        log_file.write("iteration,eta,loss\n")
    result = TrainResult(params)
    result.state = state
    t0 = time.perf_counter()
    try:
        for k in range(1, tc.n_ite + 1):
            eta = learning_rate(k, tc.eta_1, tc.eta_final, tc.n_ite)
            batch = problem.sample_batch(tc.n_xi, tc.n_x, rng_xi, rng_x)
            loss, grads = loss_and_grad(params, problem, batch, tc.threads)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(k, params.norm())
            if tc.optimizer == "adam":
                adam_step(state, params, grads, eta, tc.beta_1, tc.beta_2, tc.eps_adam)
            else:
                sgd_step(params, grads, eta)
            state.eta = learning_rate(k + 1, tc.eta_1, tc.eta_final, tc.n_ite)  # decayed rate
            result.history.append((k, eta, loss))
            if log_file is not None and k % tc.log_every == 0:
                log_file.write(f"{k},{float(eta)!r},{float(loss)!r}\n")
            if out is not None and tc.checkpoint_every and k % tc.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{k:08d}.json", params, problem.scaling,
                                problem.to_dict(), {"iteration": k})
            if progress is not None:
                progress(k, eta, loss)
    finally:
        if log_file is not None:
            log_file.close()
    result.wall_time = time.perf_counter() - t0
    if out is not None:
        save_checkpoint(out / "final.json", params, problem.scaling, problem.to_dict(),
                        {"iteration": tc.n_ite})
    return result
