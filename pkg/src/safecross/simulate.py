"""Closed-loop execution of a scenario and the resulting trace record.

The loop is strictly causal: measure the state, solve the safety-filter QP,
hold the filtered control for one sample period while integrating the
continuous dynamics, repeat.  The simulation model and the control-design
model are identical by construction.  Every controller sample is recorded,
including the final one at t = duration (whose control is computed but not
applied), so a run of duration T at period Ts yields T/Ts + 1 records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .controller import control_step
from .dynamics import IntegrationDivergedError, integrate_step
from .geometry import path_point
from .qp import OPTIMAL, ActiveSetSolver
from .scenario import ScenarioConfig


@dataclass
class SimTrace:
    """Time-indexed record of one closed-loop run.

    Column arrays are (K,) or (K, N); ``h`` is (K, n_cbf) with one column
    per barrier, named in ``cbf_names``.  QP telemetry is kept only for
    in-memory traces; it is not part of the CSV schema.
    """

    t: np.ndarray
    v: np.ndarray
    s: np.ndarray
    x_m: np.ndarray
    y_m: np.ndarray
    u_nom: np.ndarray
    u: np.ndarray
    h: np.ndarray
    cbf_names: list
    qp_status: Optional[list] = None
    qp_iterations: Optional[np.ndarray] = None
    qp_time_s: Optional[np.ndarray] = None
    aborted: Optional[str] = None

    @property
    def n_steps(self) -> int:
        return self.t.shape[0]

    @property
    def n_agents(self) -> int:
        return self.v.shape[1] if self.v.ndim == 2 else 0

    def header(self) -> list:
        cols = ["t"]
        for i in range(self.n_agents):
            cols += [f"v_{i + 1}", f"s_{i + 1}", f"X_{i + 1}", f"Y_{i + 1}",
                     f"u_nom_{i + 1}", f"u_{i + 1}"]
        cols += list(self.cbf_names)
        return cols

    def to_csv(self, path) -> None:
        """Write the trace; floats use shortest round-trip formatting, so
        identical runs produce byte-identical files."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [",".join(self.header())]
        for k in range(self.n_steps):
            cells = [repr(float(self.t[k]))]
            for i in range(self.n_agents):
                cells += [repr(float(self.v[k, i])), repr(float(self.s[k, i])),
                          repr(float(self.x_m[k, i])), repr(float(self.y_m[k, i])),
                          repr(float(self.u_nom[k, i])), repr(float(self.u[k, i]))]
            cells += [repr(float(self.h[k, c])) for c in range(self.h.shape[1])]
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        path = Path(path)
        text = path.read_text(encoding="utf-8").strip().splitlines()
        if not text:
            raise ValueError(f"empty trace file: {path}")
        header = text[0].split(",")
        n = sum(1 for c in header if c.startswith("v_") and c[2:].isdigit())
        cbf_names = header[1 + 6 * n:]
        data = np.array([[float(cell) for cell in line.split(",")]
                         for line in text[1:]], dtype=float)
        if data.size == 0:
            data = data.reshape(0, len(header))
        if data.shape[1] != len(header):
            raise ValueError(f"malformed trace file: {path}")

        def block(offset: int) -> np.ndarray:
            return data[:, [1 + 6 * i + offset for i in range(n)]]

        return cls(
            t=data[:, 0], v=block(0), s=block(1), x_m=block(2), y_m=block(3),
            u_nom=block(4), u=block(5), h=data[:, 1 + 6 * n:],
            cbf_names=cbf_names,
        )


class SimulationAborted(RuntimeError):
    """Run stopped early; carries the partial trace for post-mortem."""

    def __init__(self, reason: str, trace: SimTrace):
        super().__init__(reason)
        self.reason = reason
        self.trace = trace


@dataclass
class _Recorder:
    cfg: ScenarioConfig
    rows_t: list = field(default_factory=list)
    rows_v: list = field(default_factory=list)
    rows_s: list = field(default_factory=list)
    rows_unom: list = field(default_factory=list)
    rows_u: list = field(default_factory=list)
    rows_h: list = field(default_factory=list)
    qp_status: list = field(default_factory=list)
    qp_iters: list = field(default_factory=list)
    qp_time: list = field(default_factory=list)
    cbf_names: list = field(default_factory=list)

    def __post_init__(self):
        n = self.cfg.n_agents
        self.cbf_names = (
            [f"h_vlo_{i + 1}" for i in range(n)]
            + [f"h_vhi_{i + 1}" for i in range(n)]
            + [f"h_c_{i + 1}{j + 1}"
               for (i, j) in self.cfg.conflict_graph.ordered_pairs]
        )

    def record(self, t, state, decision):
        by_name = {row.name: row.h_value for row in decision.rows}
        self.rows_t.append(t)
        self.rows_v.append(state.v.copy())
        self.rows_s.append(state.s.copy())
        self.rows_unom.append(decision.u_nom.copy())
        self.rows_u.append(decision.u_star.copy())
        self.rows_h.append([by_name[name] for name in self.cbf_names])
        self.qp_status.append(decision.qp.status)
        self.qp_iters.append(decision.qp.iterations)
        self.qp_time.append(decision.timing_s)

    def finish(self, aborted: Optional[str] = None) -> SimTrace:
        n = self.cfg.n_agents
        k = len(self.rows_t)
        s_arr = np.array(self.rows_s) if k else np.zeros((0, n))
        x_m = np.zeros_like(s_arr)
        y_m = np.zeros_like(s_arr)
        for i, agent in enumerate(self.cfg.agents):
            for row in range(k):
                x_m[row, i], y_m[row, i] = path_point(agent.path, s_arr[row, i])
        return SimTrace(
            t=np.array(self.rows_t),
            v=np.array(self.rows_v) if k else np.zeros((0, n)),
            s=s_arr, x_m=x_m, y_m=y_m,
            u_nom=np.array(self.rows_unom) if k else np.zeros((0, n)),
            u=np.array(self.rows_u) if k else np.zeros((0, n)),
            h=np.array(self.rows_h) if k else np.zeros((0, len(self.cbf_names))),
            cbf_names=list(self.cbf_names),
            qp_status=list(self.qp_status),
            qp_iterations=np.array(self.qp_iters, dtype=int),
            qp_time_s=np.array(self.qp_time),
            aborted=aborted,
        )


def run(cfg: ScenarioConfig) -> SimTrace:
    """Execute the scenario and return the full trace.

    Raises :class:`SimulationAborted` (with the partial trace attached) if
    the QP ever fails or the integrator diverges; neither can occur for a
    validated scenario started inside the safe set.
    """
    controller = cfg.controller_config()
    params = [a.params for a in cfg.agents]
    solver = ActiveSetSolver()
    recorder = _Recorder(cfg)

    state = cfg.initial_state()
    warm = None
    n_steps = cfg.n_steps
    for k in range(n_steps):
        t = k * cfg.ts_s
        decision = control_step(state, controller, solver=solver,
                                warm_start=warm)
        if decision.qp.status != OPTIMAL:
            recorder.record(t, state, decision)
            trace = recorder.finish(
                aborted=f"QP {decision.qp.status} at t={t:.3f} s")
            raise SimulationAborted(trace.aborted, trace)
        recorder.record(t, state, decision)
        warm = decision.qp.active_set
        if k == n_steps - 1:
            break
        try:
            state = integrate_step(state, decision.u_star, params,
                                   dt=cfg.ts_s, substeps=cfg.substeps)
        except IntegrationDivergedError as exc:
            trace = recorder.finish(
                aborted=f"integration diverged at t={t:.3f} s: {exc}")
            raise SimulationAborted(trace.aborted, trace) from exc

    return recorder.finish()
