"""Declarative scenario configuration: parsing, validation, derived objects.

A scenario is a single TOML file naming every physical and controller
parameter explicitly (see ``scenarios/`` for the bundled four-agent
crossing).  Loading performs full validation, builds the conflict graph from
the path geometry, and rejects any configuration whose initial state is not
inside every barrier's safe set, since the forward-invariance guarantee
only holds from safe starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .barriers import CbfGains, collision_cbf_value, velocity_cbf_values
from .controller import ControllerConfig, DsdreWeights
from .dynamics import AgentParams, StackedState, resistance_force
from .geometry import (ConflictGraph, LinearPath, PairGeometry,
                       build_conflict_graph)
from .smoothing import SmoothingSet, SmoothMaxParams


class ScenarioError(ValueError):
    """Configuration file is malformed or describes an invalid scenario."""


@dataclass(frozen=True)
class AgentSetup:
    """One agent's parameters, path and initial condition."""

    label: str
    params: AgentParams
    path: LinearPath
    v0_mps: float

    def __post_init__(self):
        if self.v0_mps < 0.0:
            raise ScenarioError(f"agent {self.label}: v0_mps must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    agents: tuple
    gains: CbfGains
    weights: DsdreWeights
    smoothing: SmoothingSet
    ts_s: float
    duration_s: float
    substeps: int
    conflict_graph: ConflictGraph
    pair_geometry: dict
    buffer_a_m: float
    buffer_b_m: float
    seed: Optional[int] = None          # reserved, unused by default
    out_dir: str = "results"

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.ts_s)) + 1

    def initial_state(self) -> StackedState:
        return StackedState(
            v=np.array([a.v0_mps for a in self.agents]),
            s=np.zeros(len(self.agents)),
        )

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            params=tuple(a.params for a in self.agents),
            weights=tuple(self.weights for _ in self.agents),
            gains=self.gains,
            smoothing=self.smoothing,
            conflict_graph=self.conflict_graph,
            pair_geometry=self.pair_geometry,
        )

    def with_duration(self, duration_s: float) -> "ScenarioConfig":
        if duration_s <= 0.0:
            raise ScenarioError(f"duration must be positive, got {duration_s}")
        return ScenarioConfig(
            name=self.name, agents=self.agents, gains=self.gains,
            weights=self.weights, smoothing=self.smoothing, ts_s=self.ts_s,
            duration_s=duration_s, substeps=self.substeps,
            conflict_graph=self.conflict_graph,
            pair_geometry=self.pair_geometry, buffer_a_m=self.buffer_a_m,
            buffer_b_m=self.buffer_b_m, seed=self.seed, out_dir=self.out_dir,
        )


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ScenarioError(f"missing field {key!r} in [{context}]")
    return table[key]


def _positive(value, key: str, context: str) -> float:
    value = float(value)
    if value <= 0.0:
        raise ScenarioError(f"[{context}] {key} must be positive, got {value}")
    return value


def _parse_agent(table: dict, index: int) -> AgentSetup:
    ctx = f"agents[{index}]"
    label = str(table.get("id", index + 1))
    try:
        params = AgentParams(
            mass_kg=_positive(_require(table, "mass_kg", ctx), "mass_kg", ctx),
            c0_N=float(_require(table, "c0_N", ctx)),
            c1_Ns_per_m=float(_require(table, "c1_Ns_per_m", ctx)),
            c2_Ns2_per_m2=float(_require(table, "c2_Ns2_per_m2", ctx)),
            length_m=_positive(_require(table, "length_m", ctx), "length_m", ctx),
            width_m=_positive(_require(table, "width_m", ctx), "width_m", ctx),
            u_min_mps2=float(_require(table, "u_min_mps2", ctx)),
            u_max_mps2=float(_require(table, "u_max_mps2", ctx)),
            v_max_mps=_positive(_require(table, "v_max_mps", ctx), "v_max_mps", ctx),
            v_ref_mps=float(_require(table, "v_ref_mps", ctx)),
        )
    except ValueError as exc:
        raise ScenarioError(f"[{ctx}] {exc}") from exc
    start = _require(table, "start_xy_m", ctx)
    if not (isinstance(start, (list, tuple)) and len(start) == 2):
        raise ScenarioError(f"[{ctx}] start_xy_m must be a pair [x, y]")
    heading = math.radians(float(_require(table, "heading_deg", ctx)))
    path = LinearPath.from_start_heading(float(start[0]), float(start[1]), heading)
    v0 = float(_require(table, "v0_mps", ctx))
    if not (0.0 <= v0 <= params.v_max_mps):
        raise ScenarioError(
            f"[{ctx}] v0_mps={v0} outside [0, v_max={params.v_max_mps}]"
        )
    return AgentSetup(label=label, params=params, path=path, v0_mps=v0)


def _parse_smoothing(table: dict) -> SmoothingSet:
    def inst(key: str, default: SmoothMaxParams, side: str) -> SmoothMaxParams:
        sub = table.get(key)
        if sub is None:
            return default
        return SmoothMaxParams(b1=float(sub.get("b1", default.b1)),
                               b2=float(sub.get("b2", default.b2)),
                               side=side)

    defaults = SmoothingSet()
    return SmoothingSet(
        closing=inst("closing", defaults.closing, "over"),
        braking=inst("braking", defaults.braking, "over"),
        authority=inst("authority", defaults.authority, "under"),
        epsilon_mps2=float(table.get("epsilon_mps2", defaults.epsilon_mps2)),
    )


def check_input_bound_feasible(p: AgentParams, lambda_lo: float) -> float:
    """Largest acceleration the lower velocity barrier can ever demand.

    The barrier requires u >= F_r(v)/m - lambda_lo v somewhere on
    [0, v_max]; the agent's u_max must dominate that, otherwise the barrier
    is not realizable under the input bounds.
    """
    v = np.linspace(0.0, p.v_max_mps, 2001)[1:]       # open at 0, F_r jumps
    demand = (np.sign(v) * p.c0_N + p.c1_Ns_per_m * v
              + p.c2_Ns2_per_m2 * v * v) / p.mass_kg - lambda_lo * v
    return float(max(0.0, np.max(demand)))


def validate_start_safe(agents, gains, smoothing, graph, pair_geometry):
    """All barrier values at t = 0; raises naming every violated barrier."""
    x0 = StackedState(
        v=np.array([a.v0_mps for a in agents]),
        s=np.zeros(len(agents)),
    )
    violated = []
    for i, agent in enumerate(agents):
        h_lo, h_hi = velocity_cbf_values(x0.agent(i), agent.params)
        if h_lo < 0.0:
            violated.append((f"h_vlo_{i + 1}", h_lo))
        if h_hi < 0.0:
            violated.append((f"h_vhi_{i + 1}", h_hi))
    for (i, j) in graph.ordered_pairs:
        h_c = collision_cbf_value(
            x0, (i, j), pair_geometry[(i, j)], agents[i].params,
            agents[j].params, gains, smoothing,
        )
        if h_c < 0.0:
            violated.append((f"h_c_{i + 1}{j + 1}", h_c))
    if violated:
        listing = ", ".join(f"{name}={value:.6g}" for name, value in violated)
        raise ScenarioError(
            f"initial state lies outside the safe set: {listing}"
        )


def load_scenario(path) -> ScenarioConfig:
    """Parse and fully validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_dict(raw, name_hint=path.stem)


def scenario_from_dict(raw: dict, name_hint: str = "scenario") -> ScenarioConfig:
    sc = raw.get("scenario", {})
    name = str(sc.get("name", name_hint))
    ts_s = _positive(sc.get("ts_s", 0.02), "ts_s", "scenario")
    duration_s = _positive(sc.get("duration_s", 12.0), "duration_s", "scenario")
    substeps = int(sc.get("integrator_substeps", 10))
    if substeps < 1:
        raise ScenarioError("[scenario] integrator_substeps must be >= 1")
    out_dir = str(sc.get("out_dir", "results"))
    seed = sc.get("seed")
    seed = int(seed) if seed is not None else None

    gtab = raw.get("gains", {})
    try:
        gains = CbfGains(
            lambda_lo=_positive(gtab.get("lambda_lo", 5.0), "lambda_lo", "gains"),
            lambda_hi=_positive(gtab.get("lambda_hi", 5.0), "lambda_hi", "gains"),
            lambda_c=_positive(gtab.get("lambda_c", 2.0), "lambda_c", "gains"),
        )
    except ValueError as exc:
        raise ScenarioError(f"[gains] {exc}") from exc

    ttab = raw.get("tracking", {})
    try:
        weights = DsdreWeights(
            q=float(ttab.get("q", 1.0)),
            r=float(ttab.get("r", 4.0)),
            ts_s=ts_s,
            v_thld_mps=float(ttab.get("v_threshold_mps", 0.1)),
        )
    except ValueError as exc:
        raise ScenarioError(f"[tracking] {exc}") from exc

    stab = raw.get("safety", {})
    buffer_a = float(stab.get("buffer_a_m", 1.5))
    buffer_b = float(stab.get("buffer_b_m", 1.5))
    if buffer_a < 0.0 or buffer_b < 0.0:
        raise ScenarioError("[safety] buffers must be non-negative")
    try:
        smoothing = _parse_smoothing(stab.get("smooth_max", {}))
    except ValueError as exc:
        raise ScenarioError(f"[safety.smooth_max] {exc}") from exc

    agent_tables = raw.get("agents", [])
    if not agent_tables:
        raise ScenarioError("scenario must define at least one [[agents]] entry")
    agents = tuple(_parse_agent(t, k) for k, t in enumerate(agent_tables))

    for i, agent in enumerate(agents):
        demand = check_input_bound_feasible(agent.params, gains.lambda_lo)
        if agent.params.u_max_mps2 < demand:
            raise ScenarioError(
                f"[agents[{i}]] u_max_mps2={agent.params.u_max_mps2} cannot "
                f"realize the lower velocity barrier (needs >= {demand:.4g})"
            )

    s_reach = max(a.params.v_max_mps for a in agents) * duration_s
    graph = build_conflict_graph(
        paths=[a.path for a in agents],
        params=[a.params for a in agents],
        s_ranges=[(0.0, s_reach)] * len(agents),
        buffer_a_m=buffer_a,
        buffer_b_m=buffer_b,
    )
    pair_geometry = {
        (i, j): PairGeometry.for_pair(
            agents[i].path, agents[j].path, agents[i].params,
            agents[j].params, buffer_a, buffer_b,
        )
        for (i, j) in graph.ordered_pairs
    }

    validate_start_safe(agents, gains, smoothing, graph, pair_geometry)

    return ScenarioConfig(
        name=name, agents=agents, gains=gains, weights=weights,
        smoothing=smoothing, ts_s=ts_s, duration_s=duration_s,
        substeps=substeps, conflict_graph=graph, pair_geometry=pair_geometry,
        buffer_a_m=buffer_a, buffer_b_m=buffer_b, seed=seed, out_dir=out_dir,
    )
