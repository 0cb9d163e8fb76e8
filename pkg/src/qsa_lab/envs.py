"""Benchmark environments and end-to-end experiments.

Four workloads exercise the library end to end: scalar quasi Monte Carlo
averaging of an oscillatory integrand, a soft-min landscape for the
gradient-free optimizers, LQR policy evaluation / policy iteration from
trajectory data, and the episodic mountain-car policy search.

All randomness is deterministic: pseudo-random baselines use a fixed
64-bit linear congruential generator with a configurable seed, and
quasi-random sequences use irrational rotations.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from . import linmodel, qsgd
from .gain import GainSchedule
from .probe import ProbeSpec, probe_eval_array, quasi_uniform, sawtooth_mixture, sinusoid_mixture

# ---------------------------------------------------------------------------
# Deterministic pseudo-randomness
# ---------------------------------------------------------------------------

_LCG_A = 6364136223846793005
_LCG_C = 1442695040888963407
_LCG_MOD = 1 << 64


class Lcg64:
    """Knuth's 64-bit linear congruential generator; the seeded baseline RNG."""

    def __init__(self, seed: int = 0):
        self.state = seed % _LCG_MOD

    def uniform(self) -> float:
        self.state = (_LCG_A * self.state + _LCG_C) % _LCG_MOD
        return self.state / _LCG_MOD

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms on [0, 1), vectorized via wrap-around uint64 prefix scans."""
        if n <= 0:
            return np.zeros(0)
        a = np.uint64(_LCG_A)
        powers = np.cumprod(np.full(n, a, dtype=np.uint64))  # a^1 .. a^n (mod 2^64)
        # x_k = a^k x_0 + c * (1 + a + ... + a^{k-1})
        geom = np.empty(n, dtype=np.uint64)
        geom[0] = np.uint64(1)
        if n > 1:
            geom[1:] = np.uint64(1) + np.cumsum(powers[: n - 1], dtype=np.uint64)
        xs = powers * np.uint64(self.state) + np.uint64(_LCG_C) * geom
        self.state = int(xs[-1])
        return xs / float(_LCG_MOD)

    def normals(self, n: int) -> np.ndarray:
        inv = NormalDist().inv_cdf
        return np.array([inv(u) for u in np.clip(self.uniforms(n), 1e-15, 1 - 1e-15)])


def quasi_normal_inits(n: int, spread: float, r: float = math.pi) -> np.ndarray:
    """Deterministic stand-in for Gaussian draws: spread * invPhi(frac(k r))."""
    inv = NormalDist().inv_cdf
    return np.array([spread * inv(min(max(quasi_uniform(r, k + 1), 1e-15), 1 - 1e-15)) for k in range(n)])


# ---------------------------------------------------------------------------
# Quasi Monte Carlo
# ---------------------------------------------------------------------------


def qmc_integrand(x) -> np.ndarray:
    """The oscillatory test integrand e^{4x} sin(100 x) on [0, 1)."""
    x = np.asarray(x, dtype=float)
    return np.exp(4.0 * x) * np.sin(100.0 * x)


#: Exact integral of qmc_integrand over [0, 1).
QMC_THETA_STAR = (math.exp(4.0) * (4.0 * math.sin(100.0) - 100.0 * math.cos(100.0)) + 100.0) / 10016.0


@dataclass(frozen=True)
class QmcResult:
    gains: tuple[float, ...]
    estimates: dict  # gain -> (trials,) final estimates
    mc_estimates: np.ndarray
    theta_star: float

    def summary(self) -> dict:
        out = {"theta_star": self.theta_star, "gains": {}}
        for g in self.gains:
            est = self.estimates[g]
            out["gains"][repr(float(g))] = {
                "median": float(np.median(est)),
                "variance": float(np.var(est)),
            }
        out["monte_carlo"] = {
            "median": float(np.median(self.mc_estimates)),
            "variance": float(np.var(self.mc_estimates)),
        }
        return out


def qmc_experiment(
    gains: Sequence[float],
    T: float,
    h: float,
    trials: int,
    init_spread: float,
    y: Callable = qmc_integrand,
    seed: int = 0,
    init: str = "quasi",
    subsamples: int = 10,
) -> QmcResult:
    """Histogram experiment: scalar averaging ODE vs. seeded Monte Carlo.

    Each trial integrates d/dt theta = a_t [y(xi_t) - theta] with the unit
    sawtooth probe and gain a_t = g/(1+t), from a deterministic initial
    condition (init="quasi": inverse-CDF over an irrational rotation;
    init="seeded-normal": LCG-driven normals).  All trials share the probe
    path, so the loop is vectorized across trials.  The Monte Carlo baseline
    averages round(T/h) LCG uniforms per trial.

    The integrand oscillates far faster than the parameter dynamics, so each
    Euler cell uses the midpoint average of ``subsamples`` integrand values;
    point sampling at h would alias y and bias every estimate identically.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if subsamples < 1:
        raise ValueError("need at least one integrand subsample per cell")
    n = int(round(T / h))
    ts = np.arange(n, dtype=float) * h
    sub = (np.arange(n * subsamples, dtype=float) + 0.5) * (h / subsamples)
    y_vals = np.asarray(y(sub - np.floor(sub)), dtype=float).reshape(n, subsamples).mean(axis=1)
    if init == "quasi":
        theta0 = quasi_normal_inits(trials, init_spread)
    elif init == "seeded-normal":
        theta0 = init_spread * Lcg64(seed).normals(trials)
    else:
        raise ValueError(f"unknown init mode {init!r}")

    estimates: dict = {}
    for g in gains:
        a = g / (1.0 + ts)
        theta = theta0.copy()
        ha = h * a
        for k in range(n):
            theta += ha[k] * (y_vals[k] - theta)
        estimates[float(g)] = theta

    rng = Lcg64(seed)
    mc = np.empty(trials)
    for i in range(trials):
        mc[i] = float(np.mean(y(rng.uniforms(n))))
    return QmcResult(tuple(float(g) for g in gains), estimates, mc, QMC_THETA_STAR)


# ---------------------------------------------------------------------------
# Canonical scalar instances for rate and averaging experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarInstance:
    """A scalar root-finding instance with known linearization and bias.

    ``f`` takes float (theta, xi); ``upsilon_bar`` and the derived
    ``y_bar`` are the analytic bias constants (None when not available in
    closed form).
    """

    name: str
    f: Callable[[float, float], float]
    probe: ProbeSpec
    theta_star: float
    a_star: float
    upsilon_bar: float | None = None


def rates_instance(omega: float = 1.0, theta_star: float = 0.0) -> ScalarInstance:
    """f(theta, xi) = -(theta - theta*) + xi (1 + theta), single tone.

    Multiplicative noise with A* = -1; the single sinusoid makes the bias
    constant vanish, so the error scales cleanly with the gain.
    """
    probe = sinusoid_mixture([((1.0,), omega, 0.0)])
    f = lambda th, xi: -(th - theta_star) + xi * (1.0 + th)
    return ScalarInstance("rates", f, probe, theta_star, -1.0, upsilon_bar=0.0)


def additive_instance(omega: float = 1.0) -> ScalarInstance:
    """f(theta, xi) = -theta + xi: additive noise, so the bias vector is zero."""
    probe = sinusoid_mixture([((1.0,), omega, 0.0)])
    return ScalarInstance("additive", lambda th, xi: -th + xi, probe, 0.0, -1.0, upsilon_bar=0.0)


def multiplicative_instance() -> ScalarInstance:
    """Sawtooth-driven instance with a provably nonzero bias constant.

    f(theta, xi) = -(1 + cos(2 pi xi)) theta + sin(2 pi xi) with the
    unit-rate sawtooth started at phase 1/4: theta* = 0, A* = -1, and the
    Jacobian-noise correlation averages to -1/(4 pi).  The phase choice
    zeroes the Poisson solution at xi_0, so the noise integral has zero
    temporal mean.
    """
    probe = sawtooth_mixture([((1.0,), 1.0, 0.25)], cycles=True)
    f = lambda th, xi: -(1.0 + math.cos(2.0 * math.pi * xi)) * th + math.sin(2.0 * math.pi * xi)
    return ScalarInstance("multiplicative", f, probe, 0.0, -1.0, upsilon_bar=-1.0 / (4.0 * math.pi))


# ---------------------------------------------------------------------------
# Soft-min landscape
# ---------------------------------------------------------------------------

SOFTMIN_SIGMA = 0.1
SOFTMIN_CENTERS = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
SOFTMIN_OFFSETS = np.array([-1.0, -2.0, -2.0, -3.0])


def softmin_loss(theta) -> float | np.ndarray:
    """Soft minimum of four quadratic bowls; global minimizer near (1, 1).

    L(theta) = -log sum_k exp(-(z_k + ||theta - c_k||^2) / sigma^2),
    evaluated stably.  Accepts a single point (2,) or a batch (..., 2).
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    pts = theta[None, :] if single else theta
    d2 = np.sum((pts[..., None, :] - SOFTMIN_CENTERS) ** 2, axis=-1)
    expo = -(SOFTMIN_OFFSETS + d2) / SOFTMIN_SIGMA**2
    m = np.max(expo, axis=-1)
    val = -(m + np.log(np.sum(np.exp(expo - m[..., None]), axis=-1)))
    return float(val[0]) if single else val


# ---------------------------------------------------------------------------
# LQR policy evaluation and policy iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LqrProblem:
    """Linear dynamics dx/dt = Ax + Bu with quadratic cost x'Mx + u'Ru.

    K is the (linear state feedback) policy under evaluation; K0 is the
    stabilizing behavior gain used to generate data.
    """

    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    R: np.ndarray
    K: np.ndarray
    K0: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        M = np.asarray(self.M, dtype=float)
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        K0 = np.atleast_2d(np.asarray(self.K0, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "K0", K0)
        if not np.allclose(R, R.T) or np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValueError("R must be symmetric positive definite")
        if not linmodel.is_hurwitz(A + B @ K0):
            raise ValueError("behavior policy K0 must stabilize: A + B K0 is not Hurwitz")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def lqr_excitation_probe(
    n_tones: int = 24,
    freq_lo: float = 0.5,
    freq_hi: float = 50.0,
    amplitude: float = 1.0,
    seed: int = 1,
) -> ProbeSpec:
    """Scalar excitation: a sum of sinusoids with seeded frequencies/phases.

    Frequencies are LCG-uniform on (freq_lo, freq_hi) rad/s and phases
    uniform on [0, 1) cycles, giving a rich but reproducible input probe.
    """
    rng = Lcg64(seed)
    terms = []
    for _ in range(n_tones):
        w = freq_lo + (freq_hi - freq_lo) * rng.uniform()
        phi = rng.uniform()
        terms.append(((amplitude,), w, phi))
    return sinusoid_mixture(terms)


def quadratic_features(x1, x2, u) -> np.ndarray:
    """The six monomials (x1^2, x2^2, x1 x2, x1 u, x2 u, u^2), stacked last."""
    return np.stack([x1 * x1, x2 * x2, x1 * x2, x1 * u, x2 * u, u * u], axis=-1)


def value_matrix(p: LqrProblem, K=None) -> np.ndarray:
    """P solving the closed-loop Lyapunov equation for policy u = Kx."""
    K = p.K if K is None else np.atleast_2d(np.asarray(K, dtype=float))
    Acl = p.A + p.B @ K
    Q = p.M + K.T @ p.R @ K
    return linmodel.solve_lyapunov(Acl, Q)


def q_function_coefficients(p: LqrProblem, K=None) -> np.ndarray:
    """Ground-truth feature coefficients of the fixed-policy Q-function.

    With P the policy's value matrix, the quadratic form is
    x'(M + A'P + PA + P)x + 2 u B'P x + u'Ru, expressed on the
    quadratic_features basis (n=2, m=1 only).
    """
    if p.n != 2 or p.m != 1:
        raise ValueError("the quadratic feature basis covers n=2, m=1 only")
    P = value_matrix(p, K)
    W = p.M + p.A.T @ P + P @ p.A + P
    w = (P @ p.B)[:, 0]
    return np.array([W[0, 0], W[1, 1], 2.0 * W[0, 1], 2.0 * w[0], 2.0 * w[1], float(p.R[0, 0])])


@dataclass(frozen=True)
class LqrEvalData:
    """Feature trajectory data backing one policy-evaluation run."""

    h: float
    zeta: np.ndarray  # (N, 6)
    b: np.ndarray  # (N,)
    x: np.ndarray  # (N, 2)
    u: np.ndarray  # (N,)

    def bellman_mse(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        resid = self.zeta @ theta + self.b
        return float(np.mean(resid**2))

    def least_squares(self) -> np.ndarray:
        Mmat = self.zeta.T @ self.zeta / len(self.b)
        rhs = -(self.zeta.T @ self.b) / len(self.b)
        return np.linalg.solve(Mmat, rhs)


def simulate_lqr_features(p: LqrProblem, probe: ProbeSpec, T: float, h: float, x0=None) -> LqrEvalData:
    """Roll the excited closed loop and assemble (zeta_t, b_t) by Euler.

    u_t = K0 x_t + xi_t; zeta is the feature gradient of the Bellman error.
    The policy-feature time derivative is a backward difference in
    product-rule form, d(ab)/dt ~ (a_k db + b_k da)/h: for quadratic
    monomials this removes the O(h) positive-mean term (h/2) f'Hf that a
    plain difference quotient picks up along an Euler path, which would
    otherwise bias every fitted coefficient.  Still purely observational.
    """
    if p.n != 2 or p.m != 1:
        raise ValueError("the quadratic feature basis covers n=2, m=1 only")
    n_steps = int(round(T / h))
    ts = np.arange(n_steps + 1, dtype=float) * h
    xi = probe_eval_array(probe, ts)[:, 0]
    x = np.empty((n_steps + 1, 2))
    x[0] = np.zeros(2) if x0 is None else np.asarray(x0, dtype=float)
    A, B = p.A, p.B[:, 0]
    K0 = p.K0[0]
    state = x[0].copy()
    for k in range(n_steps):
        u_k = float(K0 @ state) + xi[k]
        state = state + h * (A @ state + B * u_k)
        if not np.all(np.abs(state) < 1e9):
            raise ValueError(f"unstable closed loop at t={ts[k + 1]:.3g}")
        x[k + 1] = state
    u = x @ K0 + xi
    K = p.K[0]
    u_pol = x @ K
    psi_data = quadratic_features(x[:, 0], x[:, 1], u)
    psi_pol = quadratic_features(x[:, 0], x[:, 1], u_pol)
    x1, x2 = x[:, 0], x[:, 1]
    dx1 = np.diff(x1)
    dx2 = np.diff(x2)
    dup = np.diff(u_pol)
    a1, a2, au = x1[:-1], x2[:-1], u_pol[:-1]
    dpsi = np.stack(
        [2 * a1 * dx1, 2 * a2 * dx2, a1 * dx2 + a2 * dx1,
         a1 * dup + au * dx1, a2 * dup + au * dx2, 2 * au * dup],
        axis=1,
    ) / h
    zeta = -psi_data[:-1] + psi_pol[:-1] + dpsi
    cost = np.einsum("ti,ij,tj->t", x, p.M, x) + float(p.R[0, 0]) * u * u
    return LqrEvalData(h=h, zeta=zeta, b=cost[:-1], x=x[:-1], u=u[:-1])


def lqr_policy_eval(
    p: LqrProblem,
    probe: ProbeSpec,
    gain: GainSchedule,
    T: float,
    h: float,
    matrix_gain: bool = True,
    burn_in: float | None = None,
    theta0=None,
    data: LqrEvalData | None = None,
) -> np.ndarray:
    """Model-free Q-function fit: theta minimizing the empirical Bellman error.

    Runs d/dt theta = -a_t Ghat^{-1} [zeta zeta' theta + b zeta] along the
    recorded feature trajectory.  With matrix_gain (the two-phase scheme),
    theta is held at theta0 while Ghat averages zeta zeta' over the burn-in
    prefix (default T/10); the preconditioned recursion then runs from the
    switch time on.  A singular Ghat means the probe did not excite the
    feature space.  Without matrix_gain the plain recursion runs from t=0,
    which needs a gain small enough for h * a_t * ||zeta||^2 to stay stable.
    """
    if data is None:
        data = simulate_lqr_features(p, probe, T, h)
    zeta, b = data.zeta, data.b
    n = zeta.shape[0]
    theta = np.zeros(6) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    g_inv = np.eye(6)
    switch = 0
    if matrix_gain:
        t_burn = T / 10.0 if burn_in is None else float(burn_in)
        switch = min(n, max(1, int(round(t_burn / h))))
        ghat = zeta[:switch].T @ zeta[:switch] / switch
        if np.linalg.cond(ghat) > 1e12:
            raise ValueError("insufficient excitation: empirical feature Gramian is singular")
        g_inv = np.linalg.inv(ghat)
    a = gain.value_array(np.arange(n, dtype=float) * h)
    tail_from = n - max(1, (n - switch) // 5)
    tail_sum = np.zeros(6)
    tail_count = 0
    for k in range(switch, n):
        grad = zeta[k] * float(zeta[k] @ theta + b[k])
        theta = theta - h * a[k] * (g_inv @ grad)
        if not np.all(np.abs(theta) < 1e12):
            raise ValueError(f"policy evaluation diverged at t={k * h:.3g}")
        if k >= tail_from:
            tail_sum += theta
            tail_count += 1
    # the final 20% average damps the residual probe ripple
    return tail_sum / tail_count


def greedy_gain_from_theta(theta) -> np.ndarray:
    """Policy update: argmin_u of the fitted quadratic Q, i.e. K = -[t4 t5]/(2 t6)."""
    theta = np.asarray(theta, dtype=float)
    if theta[5] <= 0:
        raise ValueError("fitted u^2 coefficient must be positive to minimize in u")
    return np.array([[-theta[3] / (2.0 * theta[5]), -theta[4] / (2.0 * theta[5])]])


def lqr_pia(
    p: LqrProblem,
    rounds: int,
    probe: ProbeSpec,
    gain: GainSchedule,
    T: float,
    h: float,
    matrix_gain: bool = True,
    tol: float = 1e-4,
) -> list[np.ndarray]:
    """Approximate policy iteration; returns the gain sequence [K_0, K_1, ...].

    Alternates model-free policy evaluation with the analytic greedy update,
    stopping after ``rounds`` or once the gain moves by no more than ``tol``.
    A destabilizing update aborts with the offending round index.
    """
    gains_seq = [p.K.copy()]
    current = p
    for j in range(rounds):
        theta = lqr_policy_eval(current, probe, gain, T, h, matrix_gain=matrix_gain)
        K_next = greedy_gain_from_theta(theta)
        if not linmodel.is_hurwitz(p.A + p.B @ K_next):
            raise ValueError(f"destabilizing policy update at round {j}")
        gains_seq.append(K_next)
        if float(np.max(np.abs(K_next - gains_seq[-2]))) <= tol:
            break
        current = dataclasses.replace(current, K=K_next)
    return gains_seq


def kleinman_gain(A, B, M, R, K0, iters: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Model-based optimal gain by Kleinman-Newton iteration (the PIA oracle)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    M = np.asarray(M, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    R_inv = np.linalg.inv(R)
    for _ in range(iters):
        P = linmodel.solve_lyapunov(A + B @ K, M + K.T @ R @ K)
        K_next = -R_inv @ B.T @ P
        if float(np.max(np.abs(K_next - K))) < tol:
            return K_next
        K = K_next
    return K


# ---------------------------------------------------------------------------
# Mountain car
# ---------------------------------------------------------------------------

MC_Z_MIN = -1.2
MC_Z_GOAL = 0.5
MC_V_MAX = 0.07
MC_J_MAX = 5000


@dataclass(frozen=True)
class MountainCarState:
    """Position/velocity pair, clamped to the admissible box."""

    z: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "z", min(max(self.z, MC_Z_MIN), MC_Z_GOAL))
        object.__setattr__(self, "v", min(max(self.v, -MC_V_MAX), MC_V_MAX))

    @property
    def at_goal(self) -> bool:
        return self.z >= MC_Z_GOAL


MC_GOAL_STATE = MountainCarState(MC_Z_GOAL, 0.0)


def mountain_car_step(s: MountainCarState, u: float) -> MountainCarState:
    """Discrete-time update with clamping; the goal state is absorbing.

    z+ = clamp(z + v), v+ = clamp(v + 1e-3 u - 2.5e-3 cos(3 z)); reaching
    the goal position collapses the state to (z_goal, 0).
    """
    if not -1.0 <= u <= 1.0:
        raise ValueError("throttle must lie in [-1, 1]")
    if s.at_goal:
        return MC_GOAL_STATE
    z_new = s.z + s.v
    if z_new >= MC_Z_GOAL:
        return MC_GOAL_STATE
    v_new = s.v + 1e-3 * u - 2.5e-3 * math.cos(3.0 * s.z)
    return MountainCarState(z_new, v_new)


def threshold_policy(theta: float, z: float, v: float) -> float:
    """Full throttle toward the goal when the one-step position estimate
    z + v is at or below theta; otherwise push along the current velocity."""
    if z + v <= theta:
        return 1.0
    return float(np.sign(v))


def mountain_car_cost(theta: float, x0: MountainCarState, J_max: int = MC_J_MAX) -> int:
    """Steps to reach the goal under the threshold policy, capped at J_max."""
    if J_max < 1:
        raise ValueError("cap must be at least 1")
    z, v = x0.z, x0.v
    if z >= MC_Z_GOAL:
        return 0
    for k in range(1, J_max + 1):
        u = 1.0 if z + v <= theta else (1.0 if v > 0 else (-1.0 if v < 0 else 0.0))
        z_new = z + v
        if z_new >= MC_Z_GOAL:
            return k
        if z_new < MC_Z_MIN:
            z_new = MC_Z_MIN
        v = v + 1e-3 * u - 2.5e-3 * math.cos(3.0 * z)
        if v > MC_V_MAX:
            v = MC_V_MAX
        elif v < -MC_V_MAX:
            v = -MC_V_MAX
        z = z_new
    return J_max


def mc_initial_state(n: int, r_v: float = math.pi, r_z: float = math.e) -> MountainCarState:
    """n-th quasi-uniform initial state: rotations frac(n pi), frac(n e)
    mapped affinely onto the admissible velocity and position ranges."""
    w_v = quasi_uniform(r_v, n)
    w_z = quasi_uniform(r_z, n)
    v = MC_V_MAX * (2.0 * w_v - 1.0)
    z = MC_Z_MIN + (MC_Z_GOAL - MC_Z_MIN) * w_z
    return MountainCarState(z, v)


def mountain_car_pg(
    N: int,
    alpha,
    epsilon: float,
    probe_n: Callable[[int], float] | None = None,
    J_max: int = MC_J_MAX,
    theta0: float = -0.5,
) -> tuple[np.ndarray, float]:
    """Episodic policy-gradient search for the threshold parameter.

    Episode n starts from the n-th quasi-uniform state and observes the
    capped time-to-goal, normalized by J_max so the stated step sizes are
    stable against the raw count scale.  Returns (theta sequence, final-20%
    average).
    """
    if probe_n is None:
        probe_fn = lambda n: np.array([math.sin(n)])
    else:
        raw = probe_n
        probe_fn = lambda n: np.atleast_1d(np.asarray(raw(n), dtype=float))

    def oracle(theta_probe: np.ndarray, n: int) -> float:
        cost = mountain_car_cost(float(theta_probe[0]), mc_initial_state(n), J_max)
        return cost / J_max

    cfg = qsgd.QsgdConfig(variant=qsgd.QsgdVariant.ONE, G=np.eye(1), epsilon=epsilon)
    thetas = qsgd.episodic_qsgd(cfg, oracle, alpha, probe_fn, N, np.array([theta0]))[:, 0]
    tail = max(1, int(math.ceil(0.2 * len(thetas))))
    theta_rp = float(np.mean(thetas[-tail:]))
    return thetas, theta_rp


def threshold_scan(
    thetas: Sequence[float],
    n_states: int = 400,
    J_max: int = MC_J_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force average cost over the quasi-uniform initial-state grid.

    Returns (grid, mean steps-to-goal per grid point); the argmin is the
    exhaustive-scan estimate of the optimal threshold.
    """
    grid = np.asarray(list(thetas), dtype=float)
    costs = np.empty(grid.shape[0])
    states = [mc_initial_state(n) for n in range(1, n_states + 1)]
    for i, th in enumerate(grid):
        costs[i] = float(np.mean([mountain_car_cost(th, s, J_max) for s in states]))
    return grid, costs
