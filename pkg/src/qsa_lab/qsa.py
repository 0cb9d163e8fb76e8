"""Fixed-step integrators for probe-driven root-finding ODEs.

Everything here is explicit Euler on a uniform grid: the driven system
d/dt theta = a_t f(theta, xi_t), the gain-weighted mean flow, and the
autonomous mean flow.  On top of the integrators sit the scaled-error
transform Z_t = (theta_t - ref_t) / a_t, Ruppert-Polyak averaging in both
windowed and ODE form, empirical convergence-rate fits, and the scaled
vector field r^-1 f(r theta) used as a stability diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gain import GainSchedule
from .probe import ProbeSpec, probe_eval_array

#: Stored samples per trajectory are thinned to at most this many.
MAX_STORED_SAMPLES = 10**6

#: Integration aborts once the state norm exceeds this bound.
DIVERGENCE_NORM = 1e12

_CHUNK = 1 << 16


class DivergenceError(RuntimeError):
    """Integration produced a non-finite or runaway state.

    Carries the failure time ``t`` and the ``trajectory`` stored so far.
    """

    def __init__(self, t: float, trajectory: "Trajectory"):
        super().__init__(f"diverged at t={t:.6g}")
        self.t = t
        self.trajectory = trajectory


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled states: entry k sits at time t0 + k * h.

    ``h`` is the stored sampling step; when a run is thinned to respect
    MAX_STORED_SAMPLES it is a multiple of the integration step.
    """

    t0: float
    h: float
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        object.__setattr__(self, "states", states)
        if not self.h > 0:
            raise ValueError("sampling step must be positive")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_final(self) -> float:
        return self.t0 + self.h * (len(self) - 1)

    def write_csv(self, path) -> None:
        _write_series_csv(path, self.times, self.states, "theta")


@dataclass(frozen=True)
class ScaledErrorSeries:
    """Z_t = (theta_t - ref_t) / a_t on the trajectory grid."""

    t0: float
    h: float
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self))

    def write_csv(self, path) -> None:
        _write_series_csv(path, self.times, self.values, "z")


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log||e_t|| against log t over a window."""

    rho_hat: float
    intercept: float
    t_lo: float
    t_hi: float
    residual: float

    def to_json_dict(self) -> dict:
        return {
            "rho_hat": self.rho_hat,
            "intercept": self.intercept,
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "residual": self.residual,
        }


def _write_series_csv(path, times: np.ndarray, values: np.ndarray, stem: str) -> None:
    cols = values.shape[1]
    header = "t," + ",".join(f"{stem}_{i + 1}" for i in range(cols))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, values):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(x)) for x in row) + "\n")


def _storage_stride(n_steps: int) -> int:
    return max(1, -(-(n_steps + 1) // MAX_STORED_SAMPLES))


# ---------------------------------------------------------------------------
# Integrators
# ---------------------------------------------------------------------------


def integrate_qsa(
    f: Callable,
    probe: ProbeSpec,
    gain: GainSchedule,
    theta0,
    T: float,
    h: float,
) -> Trajectory:
    """Explicit Euler for d/dt theta = a_t f(theta, xi_t) on [0, T].

    theta_{k+1} = theta_k + h * a_{t_k} * f(theta_k, xi_{t_k}).  Scalar
    problems (state and probe both one-dimensional) run on plain floats,
    so f may be written in either float or numpy style.  Raises
    DivergenceError, carrying the partial trajectory, if a state goes
    non-finite or its norm exceeds DIVERGENCE_NORM.
    """
    if not h > 0 or T < h:
        raise ValueError("need h > 0 and T >= h")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = theta0.shape[0]
    n_steps = int(round(T / h))
    stride = _storage_stride(n_steps)
    n_stored = n_steps // stride + 1
    out = np.empty((n_stored, d))
    out[0] = theta0

    # the float fast path needs f itself to return a scalar; probe once
    scalar = d == 1 and probe.dim == 1
    if scalar:
        xi0 = float(probe_eval_array(probe, np.array([0.0]))[0, 0])
        scalar = np.ndim(f(float(theta0[0]), xi0)) == 0
    if scalar:
        th = float(theta0[0])
    else:
        th = theta0.copy()

    stored = 1
    for start in range(0, n_steps, _CHUNK):
        stop = min(start + _CHUNK, n_steps)
        ts = np.arange(start, stop, dtype=float) * h
        ha = (h * gain.value_array(ts))
        xi = probe_eval_array(probe, ts)
        if scalar:
            ha_l = ha.tolist()
            xi_l = xi[:, 0].tolist()
            for i in range(stop - start):
                th = th + ha_l[i] * f(th, xi_l[i])
                k = start + i + 1
                if not -DIVERGENCE_NORM < th < DIVERGENCE_NORM:
                    partial = Trajectory(0.0, h * stride, out[:stored])
                    raise DivergenceError(k * h, partial)
                if k % stride == 0:
                    out[stored, 0] = th
                    stored += 1
        else:
            for i in range(stop - start):
                th = th + ha[i] * np.asarray(f(th, xi[i]), dtype=float)
                k = start + i + 1
                if not np.all(np.abs(th) < DIVERGENCE_NORM):
                    partial = Trajectory(0.0, h * stride, out[:stored])
                    raise DivergenceError(k * h, partial)
                if k % stride == 0:
                    out[stored] = th
                    stored += 1
    return Trajectory(0.0, h * stride, out[:stored])


def _euler_mean(
    fbar: Callable,
    gain_fn: Callable[[np.ndarray], np.ndarray],
    theta0,
    t0: float,
    T: float,
    h: float,
) -> Trajectory:
    if not h > 0 or T < t0 + h:
        raise ValueError("need h > 0 and T >= t0 + h")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = theta0.shape[0]
    n_steps = int(round((T - t0) / h))
    stride = _storage_stride(n_steps)
    n_stored = n_steps // stride + 1
    out = np.empty((n_stored, d))
    out[0] = theta0
    th = theta0.copy()
    stored = 1
    for start in range(0, n_steps, _CHUNK):
        stop = min(start + _CHUNK, n_steps)
        ts = t0 + np.arange(start, stop, dtype=float) * h
        ha = h * gain_fn(ts)
        for i in range(stop - start):
            th = th + ha[i] * np.asarray(fbar(th), dtype=float)
            k = start + i + 1
            if not np.all(np.abs(th) < DIVERGENCE_NORM):
                partial = Trajectory(t0, h * stride, out[:stored])
                raise DivergenceError(t0 + k * h, partial)
            if k % stride == 0:
                out[stored] = th
                stored += 1
    return Trajectory(t0, h * stride, out[:stored])


def integrate_mean_flow(
    fbar: Callable,
    gain: GainSchedule,
    theta0,
    t0: float,
    T: float,
    h: float,
) -> Trajectory:
    """Euler for the gain-weighted mean flow d/dt theta = a_t fbar(theta).

    Starts at (t0, theta0) and integrates up to final time T.
    """
    return _euler_mean(fbar, gain.value_array, theta0, t0, T, h)


def integrate_autonomous(fbar: Callable, theta0, T: float, h: float) -> Trajectory:
    """Euler for the autonomous flow d/dt theta = fbar(theta) on [0, T]."""
    return _euler_mean(fbar, lambda ts: np.ones(ts.shape), theta0, 0.0, T, h)


# ---------------------------------------------------------------------------
# Scaled error and averaging
# ---------------------------------------------------------------------------


def scaled_error(
    traj: Trajectory,
    ref,
    gain: GainSchedule,
) -> ScaledErrorSeries:
    """Z_t = (theta_t - ref_t) / a_t; ref is a fixed vector or a matched trajectory."""
    if isinstance(ref, Trajectory):
        if len(ref) != len(traj) or not math.isclose(ref.h, traj.h) or not math.isclose(ref.t0, traj.t0):
            raise ValueError("mismatched lengths: reference trajectory must share the sampling grid")
        ref_states = ref.states
    else:
        ref_states = np.atleast_1d(np.asarray(ref, dtype=float))[None, :]
        if ref_states.shape[1] != traj.dim:
            raise ValueError("reference dimension does not match trajectory")
    a = gain.value_array(traj.times)
    z = (traj.states - ref_states) / a[:, None]
    return ScaledErrorSeries(traj.t0, traj.h, z)


def rp_average(traj: Trajectory, mode: str = "windowed", K: float = 5.0) -> Trajectory:
    """Ruppert-Polyak averaging of a trajectory.

    mode="windowed": at each sample time T report the running average of
    theta over [T - T/K, T] (K=5 averages the final 20%).  mode="ode":
    Euler on d/dt theta_rp = (theta_t - theta_rp) / (1 + t), the
    two-time-scale form that averages the whole history.
    """
    if mode == "windowed":
        return _rp_windowed(traj, K)
    if mode == "ode":
        return _rp_ode(traj)
    raise ValueError(f"unknown averaging mode {mode!r}")


def _rp_windowed(traj: Trajectory, K: float) -> Trajectory:
    if not K > 1:
        raise ValueError("window divisor K must exceed 1")
    if len(traj) < 2:
        raise ValueError("trajectory shorter than averaging window")
    times = traj.times
    t_lo = times[-1] * (1.0 - 1.0 / K)
    if t_lo < traj.t0 - 1e-12:
        raise ValueError("trajectory shorter than averaging window")
    x = traj.states
    cum = np.zeros_like(x)
    cum[1:] = np.cumsum(0.5 * (x[1:] + x[:-1]) * traj.h, axis=0)
    out = np.empty_like(x)
    out[0] = x[0]
    T = times[1:]
    T0 = T * (1.0 - 1.0 / K)
    for j in range(traj.dim):
        cum_at_T0 = np.interp(T0, times, cum[:, j])
        out[1:, j] = (cum[1:, j] - cum_at_T0) / (T - T0)
    return Trajectory(traj.t0, traj.h, out)


def _rp_ode(traj: Trajectory) -> Trajectory:
    # theta_rp[k+1] = (1-c_k) theta_rp[k] + c_k theta[k],  c_k = h/(1+t_k).
    # Solved in closed form via the product Q_n = prod(1-c_k), which only
    # decays like (1+t0)/(1+t): no underflow risk.  Coarse steps (c near 1)
    # would degenerate the product form, so they take the sequential path.
    times = traj.times
    c = traj.h / (1.0 + times[:-1])
    out = np.empty_like(traj.states)
    out[0] = traj.states[0]
    if np.any(c > 0.5):
        rp = traj.states[0].copy()
        for k in range(len(traj) - 1):
            rp = rp + c[k] * (traj.states[k] - rp)
            out[k + 1] = rp
        return Trajectory(traj.t0, traj.h, out)
    q = np.concatenate([[1.0], np.cumprod(1.0 - c)])
    for j in range(traj.dim):
        incr = c * traj.states[:-1, j] / q[1:]
        u = np.concatenate([[traj.states[0, j]], traj.states[0, j] + np.cumsum(incr)])
        out[:, j] = u * q
    return Trajectory(traj.t0, traj.h, out)


def error_series(traj: Trajectory, theta_star) -> np.ndarray:
    """(t, ||theta_t - theta*||) pairs, ready for estimate_rate."""
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    errs = np.linalg.norm(traj.states - theta_star[None, :], axis=1)
    return np.column_stack([traj.times, errs])


def estimate_rate(errors, window: tuple[float, float]) -> RateFit:
    """Fit log||e_t|| = intercept - rho_hat * log t by least squares.

    ``errors`` holds (t, ||e_t||) pairs; samples outside the window and
    non-positive error values are dropped, and at least 10 must survive.
    """
    t_lo, t_hi = float(window[0]), float(window[1])
    if t_lo < 1.0:
        raise ValueError("window must start at t >= 1 (log t fit)")
    if not t_hi > t_lo:
        raise ValueError("empty fit window")
    arr = np.asarray(errors, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("errors must be (t, value) pairs")
    t, e = arr[:, 0], arr[:, 1]
    keep = (t >= t_lo) & (t <= t_hi) & (e > 0.0) & np.isfinite(e)
    t, e = t[keep], e[keep]
    if len(t) < 10:
        raise ValueError(f"need at least 10 positive error samples in window, got {len(t)}")
    lt, le = np.log(t), np.log(e)
    slope, intercept = np.polyfit(lt, le, 1)
    resid = le - (slope * lt + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    return RateFit(rho_hat=float(-slope), intercept=float(intercept), t_lo=t_lo, t_hi=t_hi, residual=rms)


def ode_at_infinity(fbar: Callable, theta, r: float) -> np.ndarray:
    """Scaled vector field r^-1 fbar(r * theta); sweep r upward to probe the limit."""
    if not r > 0:
        raise ValueError("scale r must be positive")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return np.asarray(fbar(r * theta), dtype=float) / r
