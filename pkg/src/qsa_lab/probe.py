"""Deterministic probing signals and their ergodic machinery.

A probing signal is a fixed, non-random function of time whose long-run
time averages play the role of expectations.  This module generates the
standard signal families (sinusoid mixtures, sawtooth mixtures, torus
exponentials, irrational rotations), averages functions along them, and
solves the associated Poisson equations in closed form.

Frequency convention: every stored ``omega`` is in radians per unit time.
Constructors accept ``cycles=True`` to convert from cycles per unit time
(angle ``2*pi*(phi + omega*t)``), which is how the mixture formulas are
usually written.  Phases ``phi`` are always fractions of a cycle in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Dot products |n . omega| below this are treated as resonant.
RESONANCE_TOL = 1e-12


class ProbeKind(str, Enum):
    SINUSOID_MIXTURE = "sinusoid_mixture"
    SAWTOOTH_MIXTURE = "sawtooth_mixture"
    TORUS_EXPONENTIAL = "torus_exponential"
    IRRATIONAL_ROTATION = "irrational_rotation"


@dataclass(frozen=True)
class ProbeTerm:
    """One mixture component: amplitude vector, frequency (rad), phase (cycles)."""

    v: tuple[float, ...]
    omega: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", tuple(float(x) for x in np.atleast_1d(np.asarray(self.v, dtype=float))))
        if not self.omega > 0.0:
            raise ValueError(f"frequency must be strictly positive, got {self.omega}")
        if not 0.0 <= self.phi < 1.0:
            raise ValueError(f"phase must lie in [0, 1), got {self.phi}")


@dataclass(frozen=True)
class ProbeSpec:
    """A deterministic probing signal: a mixture of periodic components.

    Evaluation rules (t >= 0, internal radian frequencies):

    * sinusoid mixture:   sum_i v_i * sin(2*pi*phi_i + omega_i * t)
    * sawtooth mixture:   sum_i v_i * frac(phi_i + omega_i * t / (2*pi))
    * torus exponential:  (cos a_1, sin a_1, ..., cos a_K, sin a_K) with
      a_i = omega_i * t + 2*pi*phi_i; output dimension is 2K
    * irrational rotation: same map as the sawtooth mixture, intended to be
      sampled at integer t (rotation number r stored as omega = 2*pi*r)
    """

    kind: ProbeKind
    terms: tuple[ProbeTerm, ...]
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ProbeKind(self.kind))
        if len(self.terms) == 0:
            raise ValueError("empty probe")
        omegas = [term.omega for term in self.terms]
        for i, w in enumerate(omegas):
            for w2 in omegas[i + 1:]:
                if math.isclose(w, w2, rel_tol=0.0, abs_tol=RESONANCE_TOL):
                    raise ValueError(f"duplicate probe frequency {w}")
        if self.kind is ProbeKind.TORUS_EXPONENTIAL:
            if self.dim != 2 * len(self.terms):
                raise ValueError("torus probe dimension must be 2 * (number of frequencies)")
            for term in self.terms:
                if term.v != (1.0, 1.0):
                    raise ValueError("torus probe terms must have v == (1, 1): output stays on the unit torus")
        else:
            for term in self.terms:
                if len(term.v) != self.dim:
                    raise ValueError(f"term amplitude has dimension {len(term.v)}, probe has dim {self.dim}")

    @property
    def omegas(self) -> np.ndarray:
        return np.array([term.omega for term in self.terms])

    @property
    def sup_bound(self) -> float:
        """Uniform bound on ||xi_t||: sum of term amplitude norms."""
        if self.kind is ProbeKind.TORUS_EXPONENTIAL:
            return math.sqrt(2 * len(self.terms))
        return float(sum(np.linalg.norm(term.v) for term in self.terms))

    # -- config round trip ------------------------------------------------

    def to_config(self) -> dict:
        return {
            "kind": self.kind.value,
            "terms": [{"v": list(term.v), "omega": term.omega, "phi": term.phi} for term in self.terms],
        }

    @staticmethod
    def from_config(cfg: Mapping) -> "ProbeSpec":
        kind = ProbeKind(cfg["kind"])
        terms = []
        for entry in cfg["terms"]:
            v = entry["v"]
            if isinstance(v, (int, float)):
                v = (float(v),)
            terms.append(ProbeTerm(tuple(v), float(entry["omega"]), float(entry.get("phi", 0.0))))
        if kind is ProbeKind.TORUS_EXPONENTIAL:
            dim = 2 * len(terms)
        else:
            dim = len(terms[0].v) if terms else 0
        return ProbeSpec(kind, tuple(terms), dim)


def _as_terms(terms: Iterable, cycles: bool) -> tuple[ProbeTerm, ...]:
    out = []
    for v, omega, phi in terms:
        if isinstance(v, (int, float)):
            v = (float(v),)
        out.append(ProbeTerm(tuple(v), TWO_PI * omega if cycles else float(omega), float(phi)))
    return tuple(out)


def sinusoid_mixture(terms: Iterable, cycles: bool = False) -> ProbeSpec:
    """Build a sinusoid-mixture probe from (v, omega, phi) triples."""
    ts = _as_terms(terms, cycles)
    return ProbeSpec(ProbeKind.SINUSOID_MIXTURE, ts, len(ts[0].v) if ts else 0)


def sawtooth_mixture(terms: Iterable, cycles: bool = True) -> ProbeSpec:
    """Build a sawtooth-mixture probe; omega defaults to cycles per unit time."""
    ts = _as_terms(terms, cycles)
    return ProbeSpec(ProbeKind.SAWTOOTH_MIXTURE, ts, len(ts[0].v) if ts else 0)


def torus_probe(omegas: Sequence[float], phis: Sequence[float] | None = None) -> ProbeSpec:
    """K-frequency torus exponential; output interleaves (cos, sin) per frequency."""
    if phis is None:
        phis = [0.0] * len(omegas)
    ts = tuple(ProbeTerm((1.0, 1.0), float(w), float(p)) for w, p in zip(omegas, phis))
    return ProbeSpec(ProbeKind.TORUS_EXPONENTIAL, ts, 2 * len(ts))


def irrational_rotation(rotations: Sequence[float], dim: int | None = None) -> ProbeSpec:
    """Rotation probe frac(n * r_i) per coordinate, meant for integer sampling."""
    d = dim if dim is not None else len(rotations)
    ts = []
    for i, r in enumerate(rotations):
        v = tuple(1.0 if j == i else 0.0 for j in range(d))
        ts.append(ProbeTerm(v, TWO_PI * float(r), 0.0))
    return ProbeSpec(ProbeKind.IRRATIONAL_ROTATION, tuple(ts), d)


def make_normalized_probe(d: int, base_freqs: Sequence[float], cycles: bool = False) -> ProbeSpec:
    """One sinusoid of amplitude sqrt(2) per coordinate: ergodic mean 0, second moment I.

    Frequencies must be distinct, positive, and free of the first- and
    second-harmonic collisions (omega_i == omega_j or omega_i == 2*omega_j)
    that would leave cross moments nonzero.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    freqs = [float(w) for w in base_freqs]
    if len(freqs) != d:
        raise ValueError(f"need {d} frequencies, got {len(freqs)}")
    for i, wi in enumerate(freqs):
        if wi <= 0:
            raise ValueError("frequencies must be positive")
        for j, wj in enumerate(freqs):
            if i != j:
                if math.isclose(wi, wj, rel_tol=1e-12):
                    raise ValueError(f"duplicate frequency {wi}")
                if math.isclose(wi, 2 * wj, rel_tol=1e-12):
                    raise ValueError(f"harmonic collision: {wi} == 2 * {wj}")
    amp = math.sqrt(2.0)
    terms = []
    for i, w in enumerate(freqs):
        v = tuple(amp if j == i else 0.0 for j in range(d))
        terms.append((v, w, 0.0))
    return sinusoid_mixture(terms, cycles=cycles)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def probe_eval(spec: ProbeSpec, t: float) -> np.ndarray:
    """Evaluate the probing signal at a single time t >= 0."""
    return probe_eval_array(spec, np.array([float(t)]))[0]


def probe_eval_array(spec: ProbeSpec, ts: np.ndarray) -> np.ndarray:
    """Vectorized evaluation: returns shape (len(ts), spec.dim)."""
    ts = np.asarray(ts, dtype=float)
    n = ts.shape[0]
    if spec.kind is ProbeKind.TORUS_EXPONENTIAL:
        out = np.empty((n, spec.dim))
        for i, term in enumerate(spec.terms):
            ang = term.omega * ts + TWO_PI * term.phi
            out[:, 2 * i] = np.cos(ang)
            out[:, 2 * i + 1] = np.sin(ang)
        return out
    out = np.zeros((n, spec.dim))
    for term in spec.terms:
        v = np.asarray(term.v)
        if spec.kind is ProbeKind.SINUSOID_MIXTURE:
            comp = np.sin(TWO_PI * term.phi + term.omega * ts)
        else:  # sawtooth mixture / irrational rotation
            phase = term.phi + term.omega * ts / TWO_PI
            comp = phase - np.floor(phase)
        out += comp[:, None] * v[None, :]
    return out


def quasi_uniform(r: float, n: int) -> float:
    """n-th point of the rotation sequence frac(n * r); equidistributed for irrational r."""
    if n < 0:
        raise ValueError("index must be nonnegative")
    return math.fmod(n * r, 1.0)


# ---------------------------------------------------------------------------
# Ergodic averaging
# ---------------------------------------------------------------------------


def ergodic_average(
    signal: ProbeSpec | Callable[[float], np.ndarray],
    T: float,
    h: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoidal time averages of a signal and its outer product over [0, T].

    Returns (mean, second_moment).  ``signal`` may be a ProbeSpec (fast path)
    or any callable t -> vector.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    if not 0 < h <= T:
        raise ValueError("step must satisfy 0 < h <= T")
    n = int(round(T / h))
    mean_acc = None
    second_acc = None
    chunk = 1 << 18
    for start in range(0, n + 1, chunk):
        stop = min(start + chunk, n + 1)
        ts = np.arange(start, stop, dtype=float) * h
        if isinstance(signal, ProbeSpec):
            vals = probe_eval_array(signal, ts)
        else:
            vals = np.stack([np.atleast_1d(np.asarray(signal(t), dtype=float)) for t in ts])
        w = np.ones(stop - start)
        if start == 0:
            w[0] = 0.5
        if stop == n + 1:
            w[-1] = 0.5
        wv = vals * w[:, None]
        if mean_acc is None:
            mean_acc = wv.sum(axis=0)
            second_acc = np.einsum("ti,tj->ij", wv, vals)
        else:
            mean_acc += wv.sum(axis=0)
            second_acc += np.einsum("ti,tj->ij", wv, vals)
    span = n * h
    return mean_acc * h / span, second_acc * h / span


# ---------------------------------------------------------------------------
# Poisson equations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SawtoothPoisson:
    """Tabulated Poisson solution for the unit-rate sawtooth flow.

    ``nodes``/``values`` sample ghat on [0, 1]; calls interpolate linearly
    after wrapping the argument into [0, 1).
    """

    gbar: float
    nodes: np.ndarray
    values: np.ndarray

    def __call__(self, z) -> float | np.ndarray:
        z = np.asarray(z, dtype=float)
        frac = z - np.floor(z)
        out = np.interp(frac, self.nodes, self.values)
        return float(out) if out.ndim == 0 else out


def poisson_sawtooth(g: Callable[[float], float], grid: int) -> tuple[float, SawtoothPoisson]:
    """Solve Poisson's equation for unit-rate sawtooth probing.

    Returns gbar = integral of g over [0, 1) and the solution
    ghat(z) = -int_0^z (g - gbar) + ghat(0), normalized so ghat has zero
    mean on [0, 1).  Quadrature is midpoint-rule at the given resolution.
    """
    if grid < 2:
        raise ValueError("grid resolution must be >= 2")
    mids = (np.arange(grid) + 0.5) / grid
    gm = np.array([float(g(z)) for z in mids])
    gbar = float(gm.mean())
    nodes = np.arange(grid + 1) / grid
    values = np.concatenate([[0.0], -np.cumsum(gm - gbar) / grid])
    offset = (0.5 * values[0] + values[1:-1].sum() + 0.5 * values[-1]) / grid
    values = values - offset
    return gbar, SawtoothPoisson(gbar, nodes, values)


@dataclass(frozen=True)
class FourierSeries:
    """Finitely supported Fourier series on a K-torus.

    Coefficients map integer multi-indices n = (n_1, ..., n_K) to complex
    values; the series at frequencies omega evaluates to
    sum_n a_n * exp(1j * (n . omega) * t).  Finite support makes absolute
    summability automatic.
    """

    coeffs: Mapping[tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        K = None
        for n, a in self.coeffs.items():
            n = tuple(int(k) for k in n)
            if K is None:
                K = len(n)
            elif len(n) != K:
                raise ValueError("all multi-indices must have the same length")
            clean[n] = complex(a)
        object.__setattr__(self, "coeffs", clean)

    @property
    def n_freqs(self) -> int:
        for n in self.coeffs:
            return len(n)
        return 0

    def abs_sum(self) -> float:
        return float(sum(abs(a) for a in self.coeffs.values()))

    def eval_at(self, omegas: Sequence[float], ts) -> np.ndarray:
        """Series value along the torus trajectory t -> (e^{j w_1 t}, ...)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        omegas = np.asarray(omegas, dtype=float)
        out = np.zeros(ts.shape, dtype=complex)
        for n, a in self.coeffs.items():
            dot = float(np.dot(n, omegas))
            out += a * np.exp(1j * dot * ts)
        return out


def poisson_fourier(a: FourierSeries, omegas: Sequence[float]) -> FourierSeries:
    """Poisson solution for a Fourier series driven by the torus rotation.

    hat a_0 = 0 and hat a_n = j * a_n / (n . omega) for n != 0.  With
    nonnegative multi-indices and omega_1 the smallest frequency, every
    coefficient obeys |hat a_n| <= |a_n| / omega_1.  A nonzero coefficient
    on a multi-index with n . omega == 0 has no bounded solution.
    """
    omegas = np.asarray(omegas, dtype=float)
    out: dict[tuple[int, ...], complex] = {}
    for n, coeff in a.coeffs.items():
        if len(n) != len(omegas):
            raise ValueError(f"multi-index {n} does not match {len(omegas)} frequencies")
        if all(k == 0 for k in n):
            continue
        dot = float(np.dot(n, omegas))
        if abs(dot) < RESONANCE_TOL:
            if abs(coeff) > 0.0:
                raise ValueError(f"resonant multi-index {n}: n . omega == 0 with nonzero coefficient")
            continue
        out[n] = 1j * coeff / dot
    return FourierSeries(out)
