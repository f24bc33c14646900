"""Speed-tracking nominal controller and the centralized safety-filter QP.

Each agent tracks its reference speed with a gain-scheduled LQR: the
velocity dynamics are factored as ``dv/dt = -a11(v) v + u`` with the
state-dependent coefficient ``a11 = F_r(v)/(m v)`` (zero below a small
speed threshold), discretized exactly under zero-order hold, and the scalar
discrete-time Riccati equation is solved in closed form every sample.

The nominal controls are then filtered through the min-norm QP of
:mod:`safecross.qp`: two velocity barrier rows per agent, one collision
barrier row per conflict pair, and the input box.  The filter returns the
feasible control closest to the nominal one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .barriers import (CbfGains, ConstraintRow, collision_cbf_row,
                       velocity_cbf_rows)
from .dynamics import AgentParams, AgentState, StackedState, resistance_force
from .geometry import ConflictGraph, PairGeometry
from .qp import OPTIMAL, ActiveSetSolver, QpProblem, QpSolution
from .smoothing import SmoothingSet


@dataclass(frozen=True)
class DsdreWeights:
    """Scalar LQR weights for the velocity subsystem."""

    q: float = 1.0
    r: float = 4.0
    ts_s: float = 0.02
    v_thld_mps: float = 0.1

    def __post_init__(self):
        if self.q < 0.0:
            raise ValueError(f"q must be non-negative, got {self.q}")
        if self.r <= 0.0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.ts_s <= 0.0:
            raise ValueError(f"ts_s must be positive, got {self.ts_s}")


def sdre_factor(x_i: AgentState, p: AgentParams,
                v_thld_mps: float = 0.1) -> float:
    """State-dependent coefficient a11 = F_r(v)/(m v), zero below the speed
    threshold that guards the division."""
    if x_i.v_mps < v_thld_mps:
        return 0.0
    return resistance_force(x_i.v_mps, p) / (p.mass_kg * x_i.v_mps)


def discretize(a11: float, ts_s: float) -> tuple[float, float]:
    """Exact zero-order-hold discretization of dv/dt = -a11 v + u."""
    if ts_s <= 0.0:
        raise ValueError(f"ts_s must be positive, got {ts_s}")
    a_d = math.exp(-a11 * ts_s)
    if abs(a11) > 1e-12:
        b_d = (1.0 - a_d) / a11
    else:
        b_d = ts_s
    return a_d, b_d


def dsdre_gain(a_d: float, b_d: float, w: DsdreWeights) -> float:
    """Closed-form feedback gain of the scalar discrete Riccati equation.

    The cost-to-go coefficient P is the unique non-negative root of

        b_d^2 P^2 + (r - r a_d^2 - q b_d^2) P - q r = 0,

    and the gain is K = b_d P a_d / (r + b_d^2 P).
    """
    if b_d == 0.0:
        raise ValueError("b_d = 0: discretized system is uncontrollable")
    b2 = b_d * b_d
    lin = w.r - w.r * a_d * a_d - w.q * b2
    disc = lin * lin + 4.0 * b2 * w.q * w.r
    p_cost = (-lin + math.sqrt(disc)) / (2.0 * b2)
    return b_d * p_cost * a_d / (w.r + b2 * p_cost)


def nominal_control(x_i: AgentState, p: AgentParams, w: DsdreWeights) -> float:
    """Reference-speed tracking law u = -K (v - v_ref); deliberately not
    clamped here, saturation is the safety filter's job."""
    a11 = sdre_factor(x_i, p, w.v_thld_mps)
    a_d, b_d = discretize(a11, w.ts_s)
    gain = dsdre_gain(a_d, b_d, w)
    return -gain * (x_i.v_mps - p.v_ref_mps)


@dataclass(frozen=True)
class ControllerConfig:
    """Everything the per-sample controller needs besides the state."""

    params: tuple
    weights: tuple
    gains: CbfGains
    smoothing: SmoothingSet
    conflict_graph: ConflictGraph
    pair_geometry: dict

    def __post_init__(self):
        n = len(self.params)
        if len(self.weights) != n:
            raise ValueError("one DsdreWeights per agent required")
        if self.conflict_graph.n_agents != n:
            raise ValueError("conflict graph size mismatch")
        for pair in self.conflict_graph.ordered_pairs:
            if pair not in self.pair_geometry:
                raise ValueError(f"missing pair geometry for {pair}")

    @property
    def n_agents(self) -> int:
        return len(self.params)


@dataclass
class ControlDecision:
    """Outcome of one controller sample."""

    u_nom: np.ndarray
    u_star: np.ndarray
    rows: list
    qp: QpSolution
    timing_s: float


def assemble_rows(x: StackedState, cfg: ControllerConfig) -> list:
    """All barrier rows at the given state: two velocity rows per agent,
    then one collision row per conflict pair, in deterministic order."""
    n = cfg.n_agents
    rows: list = []
    for i in range(n):
        lo, hi = velocity_cbf_rows(x.agent(i), cfg.params[i], cfg.gains, i, n)
        rows.append(lo)
        rows.append(hi)
    for pair in cfg.conflict_graph.ordered_pairs:
        i, j = pair
        rows.append(collision_cbf_row(
            x, pair, cfg.pair_geometry[pair], cfg.params[i], cfg.params[j],
            cfg.gains, cfg.smoothing,
        ))
    return rows


def control_step(
    x: StackedState,
    cfg: ControllerConfig,
    solver: Optional[ActiveSetSolver] = None,
    warm_start: Optional[Sequence[int]] = None,
) -> ControlDecision:
    """One controller sample: nominal controls, barrier rows, min-norm QP."""
    n = cfg.n_agents
    u_nom = np.array([
        nominal_control(x.agent(i), cfg.params[i], cfg.weights[i])
        for i in range(n)
    ])
    rows = assemble_rows(x, cfg)
    qp = QpProblem(
        n=n,
        u_nom=u_nom,
        rows=rows,
        lb=np.array([p.u_min_mps2 for p in cfg.params]),
        ub=np.array([p.u_max_mps2 for p in cfg.params]),
    )
    if solver is None:
        solver = ActiveSetSolver()
    t0 = time.perf_counter()
    sol = solver.solve(qp, warm_start=warm_start)
    elapsed = time.perf_counter() - t0
    return ControlDecision(u_nom=u_nom, u_star=sol.u_star, rows=rows,
                           qp=sol, timing_s=elapsed)
