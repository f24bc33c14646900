"""Post-hoc safety verification of a trace, independent of the controller.

Two layers of checking:

* an oriented-bounding-box collision oracle that rebuilds each vehicle's
  footprint rectangle from the trace positions and tests pairwise overlap
  with the separating-axis theorem — it shares no code with the barrier
  machinery, so it can catch errors in the barriers themselves;
* invariant checks on the recorded barrier values: non-negativity, the
  per-step exponential-decay margin implied by each barrier's constraint,
  input-bound compliance, and QP health.

The result is a :class:`SafetyReport` whose ``clean`` flag drives the CLI
exit code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scenario import ScenarioConfig
from .simulate import SimTrace

_H_FLOOR_TOL = 1e-3
_MARGIN_TOL = 1e-3
_INPUT_TOL = 1e-6


def _rect_corners(cx, cy, heading_rad, length_m, width_m) -> np.ndarray:
    c, s = np.cos(heading_rad), np.sin(heading_rad)
    ex, ey = c, s            # longitudinal axis
    nx, ny = -s, c           # lateral axis
    hl, hw = length_m / 2.0, width_m / 2.0
    return np.array([
        [cx + ex * hl + nx * hw, cy + ey * hl + ny * hw],
        [cx + ex * hl - nx * hw, cy + ey * hl - ny * hw],
        [cx - ex * hl - nx * hw, cy - ey * hl - ny * hw],
        [cx - ex * hl + nx * hw, cy - ey * hl + ny * hw],
    ])


def rectangles_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals (touching counts
    as overlap)."""
    for corners in (corners_a, corners_b):
        for k in range(4):
            edge = corners[(k + 1) % 4] - corners[k]
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def obb_collision_oracle(trace: SimTrace, cfg: ScenarioConfig) -> list:
    """All (step, i, j) with overlapping vehicle footprints, for every
    unordered agent pair (not just conflict-graph edges)."""
    n = trace.n_agents
    dims = [(a.params.length_m, a.params.width_m) for a in cfg.agents]
    headings = [a.path.heading_rad for a in cfg.agents]
    overlaps = []
    for k in range(trace.n_steps):
        corners = [
            _rect_corners(trace.x_m[k, i], trace.y_m[k, i], headings[i],
                          dims[i][0], dims[i][1])
            for i in range(n)
        ]
        for i in range(n):
            for j in range(i + 1, n):
                # Cheap reject: centers farther than the two circumradii.
                reach = (np.hypot(*dims[i]) + np.hypot(*dims[j])) / 2.0
                dx = trace.x_m[k, j] - trace.x_m[k, i]
                dy = trace.y_m[k, j] - trace.y_m[k, i]
                if dx * dx + dy * dy > reach * reach:
                    continue
                if rectangles_overlap(corners[i], corners[j]):
                    overlaps.append((k, i, j))
    return overlaps


def _lambda_for(name: str, cfg: ScenarioConfig) -> float:
    if name.startswith("h_vlo"):
        return cfg.gains.lambda_lo
    if name.startswith("h_vhi"):
        return cfg.gains.lambda_hi
    return cfg.gains.lambda_c


@dataclass
class SafetyReport:
    """Aggregated verdicts over a complete trace."""

    cbf_min: dict
    cbf_floor_violations: list          # (name, step, value)
    comparison_margin_min: dict
    comparison_violations: list         # (name, step, margin)
    input_violations: list              # (step, agent, value)
    obb_overlaps: list                  # (step, i, j)
    qp_failure_count: Optional[int]
    qp_time_mean_s: Optional[float]
    qp_time_max_s: Optional[float]
    n_steps: int
    aborted: Optional[str] = None

    @property
    def clean(self) -> bool:
        return (
            not self.cbf_floor_violations
            and not self.comparison_violations
            and not self.input_violations
            and not self.obb_overlaps
            and (self.qp_failure_count in (None, 0))
            and self.aborted is None
        )

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "n_steps": self.n_steps,
            "aborted": self.aborted,
            "cbf_min": {k: float(v) for k, v in self.cbf_min.items()},
            "cbf_floor_violations": [
                {"name": n, "step": int(k), "value": float(v)}
                for (n, k, v) in self.cbf_floor_violations
            ],
            "comparison_margin_min": {
                k: float(v) for k, v in self.comparison_margin_min.items()
            },
            "comparison_violations": [
                {"name": n, "step": int(k), "margin": float(v)}
                for (n, k, v) in self.comparison_violations
            ],
            "input_violations": [
                {"step": int(k), "agent": int(i + 1), "value": float(v)}
                for (k, i, v) in self.input_violations
            ],
            "obb_overlaps": [
                {"step": int(k), "agents": [int(i + 1), int(j + 1)]}
                for (k, i, j) in self.obb_overlaps
            ],
            "qp_failure_count": self.qp_failure_count,
            "qp_time_mean_s": self.qp_time_mean_s,
            "qp_time_max_s": self.qp_time_max_s,
        }


def verify_invariants(trace: SimTrace, cfg: ScenarioConfig) -> SafetyReport:
    """Run every post-hoc check; failures are reported, never raised."""
    cbf_min: dict = {}
    floor_violations = []
    margin_min: dict = {}
    margin_violations = []

    for c, name in enumerate(trace.cbf_names):
        column = trace.h[:, c]
        if column.size:
            cbf_min[name] = float(np.min(column))
            worst = int(np.argmin(column))
            if column[worst] < -_H_FLOOR_TOL:
                floor_violations.append((name, worst, float(column[worst])))
        lam = _lambda_for(name, cfg)
        decay = 1.0 - lam * cfg.ts_s
        if column.size >= 2:
            margins = column[1:] - decay * column[:-1]
            margin_min[name] = float(np.min(margins))
            bad = np.nonzero(margins < -_MARGIN_TOL)[0]
            for k in bad:
                margin_violations.append((name, int(k + 1), float(margins[k])))

    input_violations = []
    for i, agent in enumerate(cfg.agents):
        u_col = trace.u[:, i] if trace.u.size else np.zeros(0)
        for k in np.nonzero(
            (u_col < agent.params.u_min_mps2 - _INPUT_TOL)
            | (u_col > agent.params.u_max_mps2 + _INPUT_TOL)
        )[0]:
            input_violations.append((int(k), i, float(u_col[k])))

    overlaps = obb_collision_oracle(trace, cfg)

    if trace.qp_status is not None:
        qp_failures = sum(1 for st in trace.qp_status if st != "optimal")
    else:
        qp_failures = None
    qp_mean = qp_max = None
    if trace.qp_time_s is not None and len(trace.qp_time_s):
        qp_mean = float(np.mean(trace.qp_time_s))
        qp_max = float(np.max(trace.qp_time_s))

    return SafetyReport(
        cbf_min=cbf_min,
        cbf_floor_violations=floor_violations,
        comparison_margin_min=margin_min,
        comparison_violations=margin_violations,
        input_violations=input_violations,
        obb_overlaps=overlaps,
        qp_failure_count=qp_failures,
        qp_time_mean_s=qp_mean,
        qp_time_max_s=qp_max,
        n_steps=trace.n_steps,
        aborted=trace.aborted,
    )
