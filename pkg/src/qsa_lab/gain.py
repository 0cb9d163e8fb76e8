"""Gain schedules a_t, their integrals, and logarithmic derivatives.

The workhorse is the power schedule a_t = g / (1+t)^rho with 0 < rho <= 1,
optionally capped at a ceiling (a_t = min(cap, g/(1+t)^rho)).  The integral
g_t = int_0^t a_r dr doubles as the time transformation linking gain-weighted
flows to the autonomous mean flow, and r_t = -d/dt log a_t is the curvature
term entering the scaled-error dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np


class GainKind(str, Enum):
    POWER = "power"
    CONSTANT = "constant"


@dataclass(frozen=True)
class GainSchedule:
    """Parameters of a_t.  Power: min(cap, g/(1+t)^rho); Constant: g."""

    g: float
    rho: float = 1.0
    cap: float | None = None
    kind: GainKind = GainKind.POWER

    def __post_init__(self):
        object.__setattr__(self, "kind", GainKind(self.kind))
        if not self.g > 0:
            raise ValueError("gain scale g must be positive")
        if self.kind is GainKind.POWER and not 0.0 < self.rho <= 1.0:
            raise ValueError(f"exponent rho must lie in (0, 1], got {self.rho}")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive")

    def value(self, t: float) -> float:
        return gain_value(self, t)

    def value_array(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.kind is GainKind.CONSTANT:
            a = np.full(ts.shape, self.g)
        else:
            a = self.g / (1.0 + ts) ** self.rho
        if self.cap is not None:
            a = np.minimum(a, self.cap)
        return a

    def integral(self, t: float) -> float:
        return gain_integral(self, t)

    def log_derivative(self, t: float) -> float:
        return gain_log_derivative(self, t)

    # -- config round trip ------------------------------------------------

    def to_config(self) -> dict:
        cfg = {"g": self.g, "rho": self.rho, "kind": self.kind.value}
        if self.cap is not None:
            cfg["cap"] = self.cap
        return cfg

    @staticmethod
    def from_config(cfg: Mapping) -> "GainSchedule":
        return GainSchedule(
            g=float(cfg["g"]),
            rho=float(cfg.get("rho", 1.0)),
            cap=float(cfg["cap"]) if cfg.get("cap") is not None else None,
            kind=GainKind(cfg.get("kind", "power")),
        )


def gain_value(s: GainSchedule, t: float) -> float:
    """a_t at time t >= 0."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if s.kind is GainKind.CONSTANT:
        a = s.g
    else:
        a = s.g / (1.0 + t) ** s.rho
    if s.cap is not None:
        a = min(a, s.cap)
    return a


def gain_integral(s: GainSchedule, t: float) -> float:
    """Transformed time g_t = int_0^t a_r dr, in closed form.

    Defined for constant schedules (g * t) and uncapped power schedules;
    capped power schedules have no closed form here and the caller must
    integrate numerically.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if s.kind is GainKind.CONSTANT:
        return s.g * t
    if s.cap is not None:
        raise ValueError("no closed form for a capped schedule; integrate a_t numerically")
    if s.rho == 1.0:
        return s.g * math.log1p(t)
    return s.g * ((1.0 + t) ** (1.0 - s.rho) - 1.0) / (1.0 - s.rho)


def gain_log_derivative(s: GainSchedule, t: float) -> float:
    """r_t = -d/dt log a_t; zero for constant schedules and on active caps."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if s.kind is GainKind.CONSTANT:
        return 0.0
    if s.cap is not None and s.g / (1.0 + t) ** s.rho >= s.cap:
        return 0.0
    return s.rho / (1.0 + t)
