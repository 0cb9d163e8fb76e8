"""Gradient-free descent driven by deterministic probing.

Three field constructions, all approximating -G grad L(theta) on average:

* variant one:   -(1/eps) G xi L(theta + eps xi)       (one evaluation)
* variant two:   -(1/eps) G xi' dL/dt(theta + eps xi)  (derivative form,
  realized with finite differences over the sampling interval delta)
* variant three: -(1/(2 eps)) G xi [L(theta + eps xi) - L(theta - eps xi)]

Variants one and two need a fully normalized probe (zero mean, identity
second moment); variant three only needs the second-moment condition.
The minus sign is used throughout: every variant descends on L.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .gain import GainSchedule
from .probe import ProbeSpec, probe_eval_array
from .qsa import DIVERGENCE_NORM, MAX_STORED_SAMPLES, DivergenceError, Trajectory, rp_average

_CHUNK = 1 << 16

#: Fallback projection box (per coordinate) for variant one when none is given.
DEFAULT_BOX_HALF_WIDTH = 1e3


class QsgdVariant(str, Enum):
    ONE = "one"
    TWO = "two"
    THREE = "three"


class LossEvaluationError(RuntimeError):
    """Loss returned a non-finite value; ``point`` is the probed argument."""

    def __init__(self, point: np.ndarray):
        super().__init__(f"loss is not finite at {np.array2string(np.asarray(point), precision=6)}")
        self.point = np.asarray(point)


@dataclass(frozen=True)
class QsgdConfig:
    """Optimizer parameters: variant, gain matrix G, probe scale, projection box."""

    variant: QsgdVariant
    G: np.ndarray
    epsilon: float
    box: tuple[np.ndarray, np.ndarray] | None = None
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", QsgdVariant(self.variant))
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 0:
            G = G[None, None]
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("G must be a square matrix")
        if not np.allclose(G, G.T, atol=1e-12 * max(1.0, float(np.abs(G).max()))):
            raise ValueError("G must be symmetric")
        if np.min(np.linalg.eigvalsh(G)) <= 0:
            raise ValueError("G must be positive definite")
        object.__setattr__(self, "G", G)
        if not self.epsilon > 0:
            raise ValueError("perturbation scale epsilon must be positive")
        if self.box is not None:
            lo = np.atleast_1d(np.asarray(self.box[0], dtype=float))
            hi = np.atleast_1d(np.asarray(self.box[1], dtype=float))
            if lo.shape != hi.shape or not np.all(lo < hi):
                raise ValueError("projection box must have nonempty interior")
            object.__setattr__(self, "box", (lo, hi))
        if self.delta is not None and not self.delta > 0:
            raise ValueError("sampling interval delta must be positive")

    @property
    def dim(self) -> int:
        return self.G.shape[0]


def _loss_at(L: Callable, point: np.ndarray) -> float:
    val = float(L(point))
    if not math.isfinite(val):
        raise LossEvaluationError(point)
    return val


def qsgd_field(
    cfg: QsgdConfig,
    L: Callable,
    theta,
    xi,
    aux: tuple[np.ndarray, float] | None = None,
) -> np.ndarray:
    """One evaluation of the chosen descent field at (theta, xi).

    Variant two needs ``aux = (previous xi, previous probed loss value)``
    and a positive cfg.delta; the primes in its definition are backward
    differences over that interval.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    G, eps = cfg.G, cfg.epsilon
    if cfg.variant is QsgdVariant.ONE:
        val = _loss_at(L, theta + eps * xi)
        return -(1.0 / eps) * (G @ xi) * val
    if cfg.variant is QsgdVariant.THREE:
        plus = _loss_at(L, theta + eps * xi)
        minus = _loss_at(L, theta - eps * xi)
        return -(0.5 / eps) * (G @ xi) * (plus - minus)
    if aux is None:
        raise ValueError("variant two needs aux = (previous xi, previous loss value)")
    if cfg.delta is None:
        raise ValueError("variant two needs a sampling interval delta")
    xi_prev, loss_prev = aux
    val = _loss_at(L, theta + eps * xi)
    xi_dot = (xi - np.atleast_1d(np.asarray(xi_prev, dtype=float))) / cfg.delta
    loss_dot = (val - float(loss_prev)) / cfg.delta
    return -(1.0 / eps) * (G @ xi_dot) * loss_dot


def _project(theta: np.ndarray, box) -> np.ndarray:
    if box is None:
        return theta
    return np.clip(theta, box[0], box[1])


def run_qsgd(
    cfg: QsgdConfig,
    L: Callable,
    probe: ProbeSpec,
    gain: GainSchedule,
    theta0,
    T: float,
    h: float,
) -> tuple[Trajectory, np.ndarray]:
    """Euler integration of the descent field; returns (trajectory, theta_rp).

    theta_rp averages the final 20% of the run.  Variant one always projects
    (onto cfg.box, or a wide default box) because its field grows with L
    itself; other variants project only when a box is configured.
    """
    if not h > 0 or T < h:
        raise ValueError("need h > 0 and T >= h")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = theta0.shape[0]
    if d != cfg.dim:
        raise ValueError("theta0 dimension does not match G")
    box = cfg.box
    if box is None and cfg.variant is QsgdVariant.ONE:
        box = (theta0 - DEFAULT_BOX_HALF_WIDTH, theta0 + DEFAULT_BOX_HALF_WIDTH)
    delta = cfg.delta if cfg.delta is not None else h
    cfg_run = dataclasses.replace(cfg, delta=delta) if cfg.variant is QsgdVariant.TWO else cfg

    n_steps = int(round(T / h))
    stride = max(1, -(-(n_steps + 1) // MAX_STORED_SAMPLES))
    out = np.empty((n_steps // stride + 1, d))
    out[0] = theta0
    th = theta0.copy()
    stored = 1
    aux: tuple[np.ndarray, float] | None = None
    for start in range(0, n_steps, _CHUNK):
        stop = min(start + _CHUNK, n_steps)
        ts = np.arange(start, stop, dtype=float) * h
        ha = h * gain.value_array(ts)
        xis = probe_eval_array(probe, ts)
        for i in range(stop - start):
            xi = xis[i]
            if cfg_run.variant is QsgdVariant.TWO:
                val = _loss_at(L, th + cfg.epsilon * xi)
                if aux is not None:
                    xi_dot = (xi - aux[0]) / delta
                    loss_dot = (val - aux[1]) / delta
                    field = -(1.0 / cfg.epsilon) * (cfg.G @ xi_dot) * loss_dot
                    th = th + ha[i] * field
                aux = (xi, val)
            else:
                th = th + ha[i] * qsgd_field(cfg_run, L, th, xi)
            th = _project(th, box)
            k = start + i + 1
            if not np.all(np.abs(th) < DIVERGENCE_NORM):
                raise DivergenceError(k * h, Trajectory(0.0, h * stride, out[:stored]))
            if k % stride == 0:
                out[stored] = th
                stored += 1
    traj = Trajectory(0.0, h * stride, out[:stored])
    theta_rp = rp_average(traj, mode="windowed", K=5.0).final
    return traj, theta_rp


def episodic_qsgd(
    cfg: QsgdConfig,
    L_oracle: Callable[[np.ndarray, int], float],
    alpha,
    probe_n: Callable[[int], np.ndarray],
    N: int,
    theta0,
) -> np.ndarray:
    """Discrete episodic counterpart of variant one; returns theta_0..theta_N.

    Episode n (1-based) probes at theta_{n-1} + eps * xi_n and descends:
    theta_n = theta_{n-1} - alpha_n (1/eps) G xi_n L(theta_probe, n).
    ``alpha`` may be a constant, a callable n -> alpha_n, or a sequence of
    length N.  The oracle receives the episode index so environments can
    derandomize their initial conditions.
    """
    if N < 1:
        raise ValueError("need at least one episode")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = theta0.shape[0]
    if callable(alpha):
        alpha_fn = alpha
    elif np.ndim(alpha) == 0:
        a_const = float(alpha)
        alpha_fn = lambda n: a_const
    else:
        seq = np.asarray(alpha, dtype=float)
        if seq.shape[0] < N:
            raise ValueError("step sequence shorter than the episode count")
        alpha_fn = lambda n: float(seq[n - 1])
    out = np.empty((N + 1, d))
    out[0] = theta0
    th = theta0.copy()
    for n in range(1, N + 1):
        a_n = alpha_fn(n)
        if a_n < 0:
            raise ValueError("step sizes must be nonnegative")
        xi = np.atleast_1d(np.asarray(probe_n(n), dtype=float))
        point = th + cfg.epsilon * xi
        val = float(L_oracle(point, n))
        if not math.isfinite(val):
            raise LossEvaluationError(point)
        th = th - a_n * (1.0 / cfg.epsilon) * (cfg.G @ xi) * val
        th = _project(th, cfg.box)
        out[n] = th
    return out


def epsilon_bias_sweep(
    cfg: QsgdConfig,
    L: Callable,
    probe: ProbeSpec,
    gain: GainSchedule,
    eps_list: Sequence[float],
    T: float,
    h: float,
    theta_star,
) -> list[tuple[float, float]]:
    """One run per epsilon; returns [(eps, ||theta_rp - theta*||)] sorted by eps."""
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    rows = []
    for eps in sorted(float(e) for e in eps_list):
        cfg_eps = dataclasses.replace(cfg, epsilon=eps)
        _, theta_rp = run_qsgd(cfg_eps, L, probe, gain, theta_star.copy(), T, h)
        rows.append((eps, float(np.linalg.norm(theta_rp - theta_star))))
    return rows
