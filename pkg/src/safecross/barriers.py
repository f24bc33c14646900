"""Barrier functions and their linear-in-control constraint rows.

Two kinds of barriers keep the closed loop safe:

* velocity barriers ``h_lo = v - v_min`` and ``h_hi = v_max - v`` per agent,
  which pin the speed into ``[v_min, v_max]``;
* one collision barrier per conflict pair, ``h_c = d - d_safe``, where ``d``
  is the superellipse separation from :mod:`safecross.geometry` and
  ``d_safe`` is the smoothed two-vehicle stopping distance

      d_safe = smax(0, closing)^2
               / (2 (smax(eps, decel_i) + smax(eps, decel_j))).

  The closing speed and the two braking authorities are both projections
  onto the line of sight between the pair, so the quotient is exactly the
  1-d stopping distance of the range dynamics: the distance the pair keeps
  must cover what they cannot avoid travelling while braking the approach
  to a halt.

Every barrier of relative degree one with linear decay rate ``lam`` yields a
constraint that is affine in the stacked control:

    Lf h + Lg h . u + lam h >= 0     <=>    coeffs . u >= rhs_floor

with ``coeffs = Lg h`` and ``rhs_floor = -Lf h - lam h``.  The rows produced
here use hand-derived gradients of the smooth barrier (the checked-in tests
validate every one of them against finite differences).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AgentParams, AgentState, StackedState, resistance_force
from .geometry import PairGeometry, PairKinematics
from .smoothing import SmoothingSet, smooth_max, smooth_max_dx


@dataclass(frozen=True)
class CbfGains:
    """Linear decay rates of the barrier inequalities (all positive)."""

    lambda_lo: float
    lambda_hi: float
    lambda_c: float

    def __post_init__(self):
        for name in ("lambda_lo", "lambda_hi", "lambda_c"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_lo < self.lambda_hi:
            raise ValueError(
                "need lambda_lo >= lambda_hi so the velocity barriers admit "
                f"a common control, got {self.lambda_lo} < {self.lambda_hi}"
            )


@dataclass(frozen=True)
class ConstraintRow:
    """One affine barrier inequality ``coeffs . u >= rhs_floor``."""

    name: str
    coeffs: np.ndarray
    rhs_floor: float
    h_value: float

    def satisfied_by(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return float(self.coeffs @ u) >= self.rhs_floor - tol


def velocity_cbf_values(x_i: AgentState, p: AgentParams) -> tuple[float, float]:
    """(h_lo, h_hi) = (v - v_min, v_max - v)."""
    return (x_i.v_mps - p.v_min_mps, p.v_max_mps - x_i.v_mps)


def velocity_cbf_rows(
    x_i: AgentState,
    p: AgentParams,
    gains: CbfGains,
    index: int,
    n_agents: int,
) -> tuple[ConstraintRow, ConstraintRow]:
    """Both velocity barrier rows for agent ``index``.

    Expanded, the lower row reads  u >= F_r(v)/m - lambda_lo (v - v_min)
    and the upper row              u <= F_r(v)/m + lambda_hi (v_max - v).
    """
    h_lo, h_hi = velocity_cbf_values(x_i, p)
    drift = -resistance_force(x_i.v_mps, p) / p.mass_kg   # dv/dt at u = 0

    coeffs_lo = np.zeros(n_agents)
    coeffs_lo[index] = 1.0
    row_lo = ConstraintRow(
        name=f"h_vlo_{index + 1}",
        coeffs=coeffs_lo,
        rhs_floor=-drift - gains.lambda_lo * h_lo,
        h_value=h_lo,
    )
    coeffs_hi = np.zeros(n_agents)
    coeffs_hi[index] = -1.0
    row_hi = ConstraintRow(
        name=f"h_vhi_{index + 1}",
        coeffs=coeffs_hi,
        rhs_floor=drift - gains.lambda_hi * h_hi,
        h_value=h_hi,
    )
    return row_lo, row_hi


def braking_authority(v: float, p: AgentParams, gains: CbfGains,
                      smoothing: SmoothingSet) -> float:
    """Smooth stand-in for max{u_min, -lambda_lo v}: the strongest
    deceleration an agent may commit without being dragged below v_min.

    Lies slightly above the exact max, so the claimed braking magnitude is
    understated (conservative).  Also the constructive witness control of
    the joint-feasibility argument.
    """
    return smooth_max(p.u_min_mps2, -gains.lambda_lo * v, smoothing.braking)


def braking_authority_dv(v: float, p: AgentParams, gains: CbfGains,
                         smoothing: SmoothingSet) -> float:
    return -gains.lambda_lo * smooth_max_dx(
        p.u_min_mps2, -gains.lambda_lo * v, smoothing.braking)


def effective_decel(v: float, alignment: float, p: AgentParams,
                    gains: CbfGains, smoothing: SmoothingSet) -> float:
    """Braking authority projected on the line of sight to the partner.

    ``alignment`` is the cosine between the agent's heading and the
    direction from the agent towards its partner: positive when closing in
    (projection contributes stopping authority), zero when perpendicular,
    negative once past the crossing point.
    """
    return -alignment * braking_authority(v, p, gains, smoothing)


def safe_distance(closing_rate: float, decel_i: float, decel_j: float,
                  smoothing: SmoothingSet) -> float:
    """Smoothed stopping distance for one pair (over-approximates the exact
    max-operator value: larger demanded clearance, never smaller)."""
    s_n = smooth_max(0.0, -closing_rate, smoothing.closing)
    eps = smoothing.epsilon_mps2
    denom = 2.0 * (smooth_max(eps, decel_i, smoothing.authority)
                   + smooth_max(eps, decel_j, smoothing.authority))
    return s_n * s_n / denom


def safe_distance_exact(closing_rate: float, decel_i: float,
                        decel_j: float, epsilon: float) -> float:
    """Exact max-operator stopping distance (reference for the safe-side
    property; not differentiable, never used in the controller)."""
    num = max(0.0, -closing_rate) ** 2
    return num / (2.0 * (max(epsilon, decel_i) + max(epsilon, decel_j)))


def sight_line_closing(kin: PairKinematics, v_i: float, v_j: float) -> float:
    """Rate at which the pair's range shrinks along the line of sight.

    This, not the full separation rate, is the speed the safety distance
    has to absorb: braking acts on the range dynamics, whereas the residual
    part of the separation rate is the keep-out boundary reshaping itself
    as the sight line rotates, which no acceleration can influence.
    Negative when the pair is approaching.  Coincides with the separation
    rate whenever the pair is aligned with the sight line.
    """
    return -kin.k_i * v_i + kin.k_j * v_j


@dataclass(frozen=True)
class _PairEvaluation:
    """Everything the collision barrier needs at one stacked state."""

    kin: PairKinematics
    closing: float
    authority_i: float       # signed smooth max{u_min, -lambda v}
    authority_j: float
    decel_i: float           # projected on the sight line, >= 0 when closing
    decel_j: float
    d_safe: float
    h: float


def _evaluate_pair(x: StackedState, pair: tuple[int, int],
                   geometry: PairGeometry, params_i: AgentParams,
                   params_j: AgentParams, gains: CbfGains,
                   smoothing: SmoothingSet) -> _PairEvaluation:
    i, j = pair
    kin = geometry.evaluate(float(x.s[i]), float(x.s[j]))
    v_i, v_j = float(x.v[i]), float(x.v[j])
    closing = sight_line_closing(kin, v_i, v_j)
    auth_i = braking_authority(v_i, params_i, gains, smoothing)
    auth_j = braking_authority(v_j, params_j, gains, smoothing)
    # Alignment towards the partner: for i the sight line is +w_hat, for j
    # it is -w_hat.
    decel_i = -kin.k_i * auth_i
    decel_j = kin.k_j * auth_j
    d_safe = safe_distance(closing, decel_i, decel_j, smoothing)
    return _PairEvaluation(
        kin=kin, closing=closing, authority_i=auth_i, authority_j=auth_j,
        decel_i=decel_i, decel_j=decel_j, d_safe=d_safe, h=kin.d - d_safe,
    )


def collision_cbf_value(x: StackedState, pair: tuple[int, int],
                        geometry: PairGeometry, params_i: AgentParams,
                        params_j: AgentParams, gains: CbfGains,
                        smoothing: SmoothingSet) -> float:
    """h_c = separation minus smoothed safety distance."""
    return _evaluate_pair(x, pair, geometry, params_i, params_j, gains,
                          smoothing).h


def collision_cbf_row(x: StackedState, pair: tuple[int, int],
                      geometry: PairGeometry, params_i: AgentParams,
                      params_j: AgentParams, gains: CbfGains,
                      smoothing: SmoothingSet) -> ConstraintRow:
    """Constraint row of the collision barrier for one conflict pair.

    The row is the exact gradient of the *implemented* smooth barrier, with
    the control entering through dv/dt of the two pair members only.
    """
    i, j = pair
    ev = _evaluate_pair(x, pair, geometry, params_i, params_j, gains, smoothing)
    kin = ev.kin
    v_i, v_j = float(x.v[i]), float(x.v[j])
    eps = smoothing.epsilon_mps2

    # Safety-distance building blocks and their sensitivities.
    y = -ev.closing
    s_n = smooth_max(0.0, y, smoothing.closing)
    ds_n = smooth_max_dx(0.0, y, smoothing.closing)
    g_i = smooth_max(eps, ev.decel_i, smoothing.authority)
    g_j = smooth_max(eps, ev.decel_j, smoothing.authority)
    dg_i = smooth_max_dx(eps, ev.decel_i, smoothing.authority)
    dg_j = smooth_max_dx(eps, ev.decel_j, smoothing.authority)
    denom = 2.0 * (g_i + g_j)

    # closing = -k_i v_i + k_j v_j; the k factors rotate with the sight line
    drate_dvi, drate_dvj = -kin.k_i, kin.k_j
    drate_dsi = -kin.dk_i[0] * v_i + kin.dk_j[0] * v_j
    drate_dsj = -kin.dk_i[1] * v_i + kin.dk_j[1] * v_j

    dauth_i = braking_authority_dv(v_i, params_i, gains, smoothing)
    dauth_j = braking_authority_dv(v_j, params_j, gains, smoothing)
    # decel_i = -k_i * authority_i, decel_j = +k_j * authority_j
    ddecel_i = {
        "v_i": -kin.k_i * dauth_i,
        "s_i": -ev.authority_i * kin.dk_i[0],
        "s_j": -ev.authority_i * kin.dk_i[1],
    }
    ddecel_j = {
        "v_j": kin.k_j * dauth_j,
        "s_i": ev.authority_j * kin.dk_j[0],
        "s_j": ev.authority_j * kin.dk_j[1],
    }

    def d_safe_partial(dy: float, ddec_i: float, ddec_j: float) -> float:
        dnum = 2.0 * s_n * ds_n * dy
        ddenom = 2.0 * (dg_i * ddec_i + dg_j * ddec_j)
        return (dnum * denom - s_n * s_n * ddenom) / (denom * denom)

    dh_dvi = -d_safe_partial(-drate_dvi, ddecel_i["v_i"], 0.0)
    dh_dvj = -d_safe_partial(-drate_dvj, 0.0, ddecel_j["v_j"])
    dh_dsi = kin.grad_d[0] - d_safe_partial(-drate_dsi, ddecel_i["s_i"],
                                            ddecel_j["s_i"])
    dh_dsj = kin.grad_d[1] - d_safe_partial(-drate_dsj, ddecel_i["s_j"],
                                            ddecel_j["s_j"])

    drift_i = -resistance_force(v_i, params_i) / params_i.mass_kg
    drift_j = -resistance_force(v_j, params_j) / params_j.mass_kg
    lf = dh_dvi * drift_i + dh_dvj * drift_j + dh_dsi * v_i + dh_dsj * v_j

    coeffs = np.zeros(x.n_agents)
    coeffs[i] = dh_dvi
    coeffs[j] = dh_dvj
    return ConstraintRow(
        name=f"h_c_{i + 1}{j + 1}",
        coeffs=coeffs,
        rhs_floor=-lf - gains.lambda_c * ev.h,
        h_value=ev.h,
    )
