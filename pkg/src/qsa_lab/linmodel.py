"""Small dense linear algebra and the closed-form linear theory.

Covers Hurwitz tests, matrix exponentials, Lyapunov solves, the exact
solution of the constant-gain linear algorithm driven by sinusoids, its
window-averaged form, and the bias vectors (the time-average Upsilon-bar
of the Jacobian-noise correlation, and its resolvent image Y-bar) that
govern the asymptotic mean of the scaled error.

Everything is dense and deliberately small: dimensions are capped at 16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .probe import TWO_PI, ProbeKind, ProbeSpec, probe_eval_array
from .qsa import Trajectory

DIM_CAP = 16

_HURWITZ_TOL = 1e-10


def _check_square(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > DIM_CAP:
        raise ValueError(f"dimension {A.shape[0]} exceeds the dense cap {DIM_CAP}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues with multiplicity (LAPACK dense solver)."""
    A = _check_square(A)
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # iteration cap exceeded
        raise ValueError(f"eigenvalue iteration failed to converge: {exc}") from exc


def is_hurwitz(A) -> bool:
    """True iff every eigenvalue has real part below -1e-10."""
    return bool(np.max(eigenvalues(A).real) < -_HURWITZ_TOL)


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """e^{A t} by scaling-and-squaring with a truncated Taylor series."""
    A = _check_square(A)
    M = A * float(t)
    nrm = float(np.linalg.norm(M, np.inf))
    if not math.isfinite(nrm):
        raise ValueError("overflow: matrix exponential argument is not finite")
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0.5 else 0
    Ms = M / (2.0**s)
    d = A.shape[0]
    out = np.eye(d)
    term = np.eye(d)
    for k in range(1, 40):
        term = term @ Ms / k
        out = out + term
        if np.linalg.norm(term, np.inf) < 1e-18 * max(1.0, np.linalg.norm(out, np.inf)):
            break
    for _ in range(s):
        out = out @ out
    if not np.all(np.isfinite(out)):
        raise ValueError("overflow while squaring the matrix exponential")
    return out


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve A^T P + P A + Q = 0 for symmetric P via the Kronecker form.

    Requires A Hurwitz and Q symmetric; the result is symmetrized and its
    residual is good to ~1e-8 relative for the dimensions supported here.
    """
    A = _check_square(A)
    Q = _check_square(Q)
    if A.shape != Q.shape:
        raise ValueError("A and Q must have matching shapes")
    if not np.allclose(Q, Q.T, atol=1e-10 * max(1.0, float(np.abs(Q).max()))):
        raise ValueError("Q must be symmetric")
    if not is_hurwitz(A):
        raise ValueError("A must be Hurwitz for a unique Lyapunov solution")
    d = A.shape[0]
    eye = np.eye(d)
    # Column-stacked vec: vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P).
    lhs = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(lhs, -Q.flatten(order="F"))
    P = p.reshape((d, d), order="F")
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# The linear model and its constant-gain closed form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """f(theta, xi) = A (theta - theta_star) + B xi."""

    A: np.ndarray
    B: np.ndarray
    theta_star: np.ndarray

    def __post_init__(self):
        A = _check_square(self.A)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        theta_star = np.atleast_1d(np.asarray(self.theta_star, dtype=float))
        if B.shape[0] != A.shape[0] or theta_star.shape[0] != A.shape[0]:
            raise ValueError("A, B, theta_star dimensions disagree")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "theta_star", theta_star)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def f(self, theta, xi) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return self.A @ (theta - self.theta_star) + self.B @ xi


def _require_sinusoid(probe: ProbeSpec) -> None:
    if probe.kind is not ProbeKind.SINUSOID_MIXTURE:
        raise ValueError("closed form requires a pure sinusoid-mixture probe")


def _expm_family(M: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """e^{M t} for every t, via eigendecomposition when well conditioned."""
    d = M.shape[0]
    try:
        lam, V = np.linalg.eig(M)
        if np.linalg.cond(V) < 1e8:
            Vinv = np.linalg.inv(V)
            phases = np.exp(lam[None, :] * ts[:, None])
            out = np.einsum("ij,tj,jk->tik", V, phases, Vinv).real
            return out
    except np.linalg.LinAlgError:
        pass
    return np.stack([matrix_exponential(M, t) for t in ts])


def linear_qsa_closed_form(
    m: LinearModel,
    probe: ProbeSpec,
    alpha: float,
    theta0,
    t,
) -> np.ndarray:
    """Exact constant-gain solution of the linear algorithm at time(s) t.

    theta_t = theta* + e^{alpha A t}(theta0 - theta*)
              + sum_i alpha Gamma_t^i (B v^i),
    Gamma_t^i = Im( (alpha A - j w_i I)^{-1}
                    [ e^{alpha A t} - e^{j w_i t} I ] e^{j 2 pi phi_i} ).

    This is the zero-initial-condition convolution response; the phase
    factor multiplies the whole bracket (transient included), which is what
    an integrator check requires.  Requires A Hurwitz.  Accepts scalar or
    array t; returns (d,) or (n, d).
    """
    _require_sinusoid(probe)
    if not is_hurwitz(m.A):
        raise ValueError("closed form requires a Hurwitz A")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    scalar_in = np.isscalar(t) or np.ndim(t) == 0
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = m.dim
    eye = np.eye(d)
    expAt = _expm_family(alpha * m.A, ts)  # (n, d, d)
    tilde0 = theta0 - m.theta_star
    out = np.einsum("tij,j->ti", expAt, tilde0)
    for term in probe.terms:
        w = term.omega
        if w == 0.0:
            raise ValueError("sinusoid frequency must be nonzero")
        D = alpha * m.A - 1j * w * eye
        Dinv = np.linalg.inv(D)
        bv = m.B @ np.asarray(term.v)
        phase = np.exp(1j * TWO_PI * term.phi)
        oscill = np.exp(1j * w * ts)
        inner = (expAt.astype(complex) - oscill[:, None, None] * eye[None, :, :]) * phase
        gamma = np.einsum("ij,tjk->tik", Dinv, inner).imag
        out += alpha * np.einsum("tij,j->ti", gamma, bv)
    out = out + m.theta_star[None, :]
    return out[0] if scalar_in else out


def rp_closed_form(
    m: LinearModel,
    probe: ProbeSpec,
    alpha: float,
    theta0,
    T: float,
    K: float,
) -> np.ndarray:
    """Window average of the constant-gain closed form over [T - T/K, T].

    theta_rp = theta* + M_T (theta0 - theta*) + sum_i alpha Gamma_rp^i (B v^i)
    with M_T = (K/T) (alpha A)^{-1} [e^{alpha A T} - e^{alpha A T0}] and
    Gamma_rp^i the exact window integral of Gamma_t^i.
    """
    _require_sinusoid(probe)
    if not K > 1:
        raise ValueError("window divisor K must exceed 1")
    if not is_hurwitz(m.A):
        raise ValueError("closed form requires a Hurwitz A")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    d = m.dim
    eye = np.eye(d)
    T0 = T - T / K
    scale = K / T  # == 1 / (T - T0)
    aA = alpha * m.A
    aA_inv = np.linalg.inv(aA)
    expT = matrix_exponential(aA, T)
    expT0 = matrix_exponential(aA, T0)
    M_T = scale * aA_inv @ (expT - expT0)
    out = m.theta_star + M_T @ (theta0 - m.theta_star)
    for term in probe.terms:
        w = term.omega
        D = alpha * m.A - 1j * w * eye
        Dinv = np.linalg.inv(D)
        bv = m.B @ np.asarray(term.v)
        phase = np.exp(1j * TWO_PI * term.phi)
        transient = phase * (aA_inv @ Dinv @ (expT - expT0)).astype(complex)
        zT = np.exp(1j * (TWO_PI * term.phi + w * T))
        zT0 = np.exp(1j * (TWO_PI * term.phi + w * T0))
        oscill = (1j / w) * Dinv * (zT - zT0)
        gamma_rp = scale * (transient + oscill).imag
        out = out + alpha * gamma_rp @ bv
    return out


# ---------------------------------------------------------------------------
# Bias vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasVectors:
    """Upsilon-bar and its resolvent image Y-bar = (A* + r(rho) I)^{-1} Upsilon-bar."""

    upsilon_bar: np.ndarray
    y_bar: np.ndarray
    rho_used: float


def _jacobian(f: Callable, theta: np.ndarray, xi: np.ndarray, delta: float = 1e-6) -> np.ndarray:
    d = theta.shape[0]
    cols = []
    for j in range(d):
        step = delta * max(1.0, abs(theta[j]))
        ej = np.zeros(d)
        ej[j] = step
        fp = np.atleast_1d(np.asarray(f(theta + ej, xi), dtype=float))
        fm = np.atleast_1d(np.asarray(f(theta - ej, xi), dtype=float))
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)


def xi_integral(f: Callable, probe: ProbeSpec, theta_star, T: float, h: float) -> Trajectory:
    """Running integral of f(theta*, xi_r) over [0, t] (trapezoidal).

    This is the oscillatory component of the scaled error; computing it by
    quadrature keeps it probe-agnostic.
    """
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    n = int(round(T / h))
    ts = np.arange(n + 1, dtype=float) * h
    xi = probe_eval_array(probe, ts)
    vals = np.stack([np.atleast_1d(np.asarray(f(theta_star, x), dtype=float)) for x in xi])
    integ = np.zeros_like(vals)
    integ[1:] = np.cumsum(0.5 * (vals[1:] + vals[:-1]) * h, axis=0)
    return Trajectory(0.0, h, integ)


def upsilon_bar_numeric(f: Callable, probe: ProbeSpec, theta_star, T: float, h: float) -> np.ndarray:
    """Time average over [0, T] of the Jacobian-noise correlation.

    Upsilon_t = [Ahat(xi_0) - Ahat(xi_t)] f(theta*, xi_t), where Ahat solves
    Poisson's equation for the Jacobian of f at theta*.  The bracket equals
    the running centered integral int_0^t [A(theta*, xi_s) - A*] ds, which
    is how it is computed here (the additive normalization of Ahat cancels,
    so no Fourier expansion is needed and any ergodic probe works).
    """
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    d = theta_star.shape[0]
    n = int(round(T / h))
    ts = np.arange(n + 1, dtype=float) * h
    xi = probe_eval_array(probe, ts)

    # Pass 1: the mean Jacobian A* (trapezoid weights).
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    a_sum = np.zeros((d, d))
    jacs_small = None
    if (n + 1) * d * d <= 4_000_000:
        jacs_small = np.empty((n + 1, d, d))
    for k in range(n + 1):
        J = _jacobian(f, theta_star, xi[k])
        a_sum += w[k] * J
        if jacs_small is not None:
            jacs_small[k] = J
    a_star = a_sum / n

    # Pass 2: running centered integral S_t, correlated against f(theta*, xi_t).
    ups_sum = np.zeros(d)
    S = np.zeros((d, d))
    prev_dev = (jacs_small[0] if jacs_small is not None else _jacobian(f, theta_star, xi[0])) - a_star
    prev_ups = S @ np.atleast_1d(np.asarray(f(theta_star, xi[0]), dtype=float))
    for k in range(1, n + 1):
        dev = (jacs_small[k] if jacs_small is not None else _jacobian(f, theta_star, xi[k])) - a_star
        S = S + 0.5 * h * (prev_dev + dev)
        ups = S @ np.atleast_1d(np.asarray(f(theta_star, xi[k]), dtype=float))
        ups_sum += 0.5 * h * (prev_ups + ups)
        prev_dev, prev_ups = dev, ups
    return ups_sum / (n * h)


def y_bar(A_star, rho: float, upsilon_bar) -> BiasVectors:
    """Solve (A* + r(rho) I) y = Upsilon-bar, with r(rho) = 1 iff rho == 1.

    This is the resolvent form from the rate analysis; the shifted matrix
    must be Hurwitz, otherwise the rate theorem does not apply at this rho.
    """
    A_star = _check_square(A_star)
    upsilon = np.atleast_1d(np.asarray(upsilon_bar, dtype=float))
    r = 1.0 if rho == 1.0 else 0.0
    shifted = A_star + r * np.eye(A_star.shape[0])
    if not is_hurwitz(shifted):
        raise ValueError("rate theorem inapplicable: A* + r(rho) I is not Hurwitz")
    y = np.linalg.solve(shifted, upsilon)
    return BiasVectors(upsilon_bar=upsilon, y_bar=y, rho_used=float(rho))
