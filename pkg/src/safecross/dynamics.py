"""Longitudinal vehicle model and fixed-step integration of the closed loop.

Each agent is a point mass moving along a fixed path with state
``(v, s)``: speed and arc-length path coordinate.  The only input is the
commanded longitudinal acceleration ``u``; rolling resistance and
aerodynamic drag oppose the motion:

    dv/dt = -F_r(v) / m + u
    ds/dt = v

with the resistance force ``F_r(v) = sign(v) c0 + c1 v + c2 v^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class IntegrationDivergedError(RuntimeError):
    """Raised when the integrator produces a non-finite state."""


@dataclass(frozen=True)
class AgentParams:
    """Physical constants, input bounds and geometry of one vehicle."""

    mass_kg: float
    c0_N: float
    c1_Ns_per_m: float
    c2_Ns2_per_m2: float
    length_m: float
    width_m: float
    u_min_mps2: float
    u_max_mps2: float
    v_max_mps: float
    v_ref_mps: float
    v_min_mps: float = 0.0

    def __post_init__(self):
        if self.mass_kg <= 0.0:
            raise ValueError(f"mass_kg must be positive, got {self.mass_kg}")
        if self.length_m <= 0.0 or self.width_m <= 0.0:
            raise ValueError("length_m and width_m must be positive")
        if not (self.u_min_mps2 < 0.0 < self.u_max_mps2):
            raise ValueError(
                f"input bounds must straddle zero, got "
                f"[{self.u_min_mps2}, {self.u_max_mps2}]"
            )
        if self.v_min_mps != 0.0:
            raise ValueError("v_min_mps is fixed at 0 (forward driving only)")
        if not (self.v_min_mps <= self.v_ref_mps <= self.v_max_mps):
            raise ValueError(
                f"need v_min <= v_ref <= v_max, got "
                f"{self.v_min_mps}, {self.v_ref_mps}, {self.v_max_mps}"
            )


@dataclass(frozen=True)
class AgentState:
    """Speed and path coordinate of one agent."""

    v_mps: float
    s_m: float

    def __post_init__(self):
        if not (math.isfinite(self.v_mps) and math.isfinite(self.s_m)):
            raise ValueError(f"state must be finite, got ({self.v_mps}, {self.s_m})")


@dataclass
class StackedState:
    """States of all agents, stored as parallel arrays of fixed length."""

    v: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.v.shape != self.s.shape or self.v.ndim != 1:
            raise ValueError("v and s must be 1-d arrays of equal length")

    @classmethod
    def from_agents(cls, agents: Sequence[AgentState]) -> "StackedState":
        return cls(
            v=np.array([a.v_mps for a in agents], dtype=float),
            s=np.array([a.s_m for a in agents], dtype=float),
        )

    def agent(self, i: int) -> AgentState:
        return AgentState(v_mps=float(self.v[i]), s_m=float(self.s[i]))

    @property
    def n_agents(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "StackedState":
        return StackedState(v=self.v.copy(), s=self.s.copy())


def resistance_force(v: float, p: AgentParams) -> float:
    """Rolling-resistance plus drag force at speed ``v`` [N].

    The Coulomb-like constant term follows sign(v) with sign(0) = 0, so a
    stopped vehicle sees no resistance and rest is an equilibrium.
    """
    sign = 0.0 if v == 0.0 else math.copysign(1.0, v)
    return sign * p.c0_N + p.c1_Ns_per_m * v + p.c2_Ns2_per_m2 * v * v


def state_derivative(x: AgentState, u: float, p: AgentParams) -> tuple[float, float]:
    """Right-hand side (dv/dt, ds/dt) of the single-agent model."""
    return (-resistance_force(x.v_mps, p) / p.mass_kg + u, x.v_mps)


# Velocities within this of zero after a step are treated as numerical dust
# and snapped to rest; larger undershoots are kept so violations stay visible.
_NEGATIVE_DUST = 1e-9


@dataclass
class _StackedParams:
    """Resistance coefficients of all agents as arrays, for vectorized RK4."""

    mass: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    @classmethod
    def from_params(cls, params: Sequence[AgentParams]) -> "_StackedParams":
        return cls(
            mass=np.array([p.mass_kg for p in params]),
            c0=np.array([p.c0_N for p in params]),
            c1=np.array([p.c1_Ns_per_m for p in params]),
            c2=np.array([p.c2_Ns2_per_m2 for p in params]),
        )

    def dv(self, v: np.ndarray, u: np.ndarray) -> np.ndarray:
        f_r = np.sign(v) * self.c0 + self.c1 * v + self.c2 * v * v
        return -f_r / self.mass + u


def integrate_step(
    x: StackedState,
    u: np.ndarray,
    params: Sequence[AgentParams],
    dt: float,
    substeps: int = 10,
) -> StackedState:
    """Advance all agents by ``dt`` under zero-order-hold input ``u``.

    Classic fourth-order Runge-Kutta, applied per substep to each agent
    independently (the agents are dynamically decoupled).  There is no hard
    velocity clamp beyond snapping sub-nanoscale negative dust to zero:
    genuine constraint violations must remain observable in the trace.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    u = np.asarray(u, dtype=float)
    if u.shape != x.v.shape:
        raise ValueError(f"control shape {u.shape} does not match state {x.v.shape}")

    sp = _StackedParams.from_params(params)
    h = dt / substeps
    v = x.v.copy()
    s = x.s.copy()
    for _ in range(substeps):
        k1v = sp.dv(v, u)
        k1s = v
        k2v = sp.dv(v + 0.5 * h * k1v, u)
        k2s = v + 0.5 * h * k1v
        k3v = sp.dv(v + 0.5 * h * k2v, u)
        k3s = v + 0.5 * h * k2v
        k4v = sp.dv(v + h * k3v, u)
        k4s = v + h * k3v
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        s = s + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)

    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(s))):
        raise IntegrationDivergedError(
            f"non-finite state after integration: v={v}, s={s}"
        )
    v[(v < 0.0) & (v > -_NEGATIVE_DUST)] = 0.0
    return StackedState(v=v, s=s)
