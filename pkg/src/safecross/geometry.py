"""Path geometry and superellipse keep-out regions for straight crossings.

Each agent follows an affine path ``s -> (X(s), Y(s))`` with unit direction,
so ``s`` is arc length.  Collision avoidance between an ordered pair (i, j)
is phrased through a quartic superellipse fixed to agent i's body frame:

    SE(Xb, Yb) = Xb^4 / a^4 + Yb^4 / b^4 - 1

Agent j's center must stay outside.  The separation measure is

    d_ij = |P_j - P_i| - nu

where ``nu`` is the distance from the superellipse center to its boundary
along the direction towards agent j; ``d_ij < 0`` iff j's center is inside
the keep-out region.  This module provides ``d_ij``, its rate along the
flow, and the first/second partial derivatives with respect to the path
coordinates that the barrier constraints need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import AgentParams, StackedState

# Below this center distance the direction to the neighbour is undefined.
_COINCIDENT_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (zero direction, coincident centers, ...)."""


@dataclass(frozen=True)
class LinearPath:
    """Affine map from path coordinate to the plane, with constant heading."""

    px0_m: float
    px1: float
    py0_m: float
    py1: float
    heading_rad: float

    def __post_init__(self):
        norm = math.hypot(self.px1, self.py1)
        if abs(norm - 1.0) > 1e-9:
            raise GeometryError(f"(px1, py1) must be a unit vector, |.|={norm}")
        expected = math.atan2(self.py1, self.px1)
        diff = (self.heading_rad - expected) % (2.0 * math.pi)
        if min(diff, 2.0 * math.pi - diff) > 1e-9:
            raise GeometryError(
                f"heading_rad={self.heading_rad} inconsistent with direction "
                f"({self.px1}, {self.py1})"
            )

    @classmethod
    def from_start_heading(cls, x0: float, y0: float, heading_rad: float) -> "LinearPath":
        # Snap axis-aligned headings so that e.g. cos(pi/2) is exactly 0.
        c, s = math.cos(heading_rad), math.sin(heading_rad)
        if abs(c) < 1e-15:
            c = 0.0
        if abs(s) < 1e-15:
            s = 0.0
        return cls(px0_m=x0, px1=c, py0_m=y0, py1=s, heading_rad=heading_rad)

    @property
    def direction(self) -> np.ndarray:
        return np.array([self.px1, self.py1])


def path_point(path: LinearPath, s: float):
    """Plane position of the path at coordinate ``s``."""
    return (path.px0_m + path.px1 * s, path.py0_m + path.py1 * s)


@dataclass(frozen=True)
class SuperellipseSpec:
    """Semi-axes of one keep-out superellipse [m]."""

    a_m: float
    b_m: float

    def __post_init__(self):
        if self.a_m <= 0.0 or self.b_m <= 0.0:
            raise GeometryError(f"semi-axes must be positive, got {self}")


def superellipse_value(point_body, spec: SuperellipseSpec) -> float:
    """Quartic form at a body-frame point: zero iff on the boundary."""
    xb, yb = point_body
    return (xb / spec.a_m) ** 4 + (yb / spec.b_m) ** 4 - 1.0


def ellipse_axes(
    params_i: AgentParams,
    heading_i: float,
    params_j: AgentParams,
    heading_j: float,
    buffer_a_m: float,
    buffer_b_m: float,
) -> SuperellipseSpec:
    """Keep-out semi-axes for the ordered pair (i, j).

    The partner's half-length (half-width) enters through the rotation by the
    relative yaw; a rotation is an isometry so the contribution equals the
    half-dimension itself for any relative heading.
    """
    if buffer_a_m < 0.0 or buffer_b_m < 0.0:
        raise GeometryError("safety buffers must be non-negative")
    dpsi = heading_j - heading_i
    c, s = math.cos(dpsi), math.sin(dpsi)
    a = params_i.length_m / 2.0 + math.hypot(c * params_j.length_m / 2.0,
                                             s * params_j.length_m / 2.0) + buffer_a_m
    b = params_i.width_m / 2.0 + math.hypot(-s * params_j.width_m / 2.0,
                                            c * params_j.width_m / 2.0) + buffer_b_m
    return SuperellipseSpec(a_m=a, b_m=b)


def boundary_scale_nu(dir_body, spec: SuperellipseSpec) -> float:
    """Distance from the superellipse center to its boundary along ``dir_body``.

    For a unit direction u the quartic ``SE(nu * u) = 0`` contains only the
    fourth power of nu, so the single positive real root is available in
    closed form:  nu = (ux^4/a^4 + uy^4/b^4)^(-1/4).
    """
    ux, uy = float(dir_body[0]), float(dir_body[1])
    norm = math.hypot(ux, uy)
    if norm < 1e-12:
        raise GeometryError("direction vector must be nonzero")
    ux, uy = ux / norm, uy / norm
    q = (ux / spec.a_m) ** 4 + (uy / spec.b_m) ** 4
    return q ** -0.25


@dataclass(frozen=True)
class PairGeometry:
    """Precomputed frame data for the ordered conflict pair (i, j).

    Everything is expressed in agent i's body frame, where i's own path
    direction is exactly (1, 0).  ``t_j`` is j's path direction in that
    frame; both are constant because headings are constant.
    """

    path_i: LinearPath
    path_j: LinearPath
    spec: SuperellipseSpec

    @classmethod
    def for_pair(
        cls,
        path_i: LinearPath,
        path_j: LinearPath,
        params_i: AgentParams,
        params_j: AgentParams,
        buffer_a_m: float,
        buffer_b_m: float,
    ) -> "PairGeometry":
        spec = ellipse_axes(
            params_i, path_i.heading_rad, params_j, path_j.heading_rad,
            buffer_a_m, buffer_b_m,
        )
        return cls(path_i=path_i, path_j=path_j, spec=spec)

    @property
    def t_j(self) -> np.ndarray:
        ei = self.path_i.direction
        ej = self.path_j.direction
        return np.array([ei[0] * ej[0] + ei[1] * ej[1],
                         -ei[1] * ej[0] + ei[0] * ej[1]])

    def rel_body(self, s_i: float, s_j: float) -> np.ndarray:
        """Vector from P_i to P_j in agent i's body frame."""
        xi, yi = path_point(self.path_i, s_i)
        xj, yj = path_point(self.path_j, s_j)
        rx, ry = xj - xi, yj - yi
        ei = self.path_i.direction
        return np.array([ei[0] * rx + ei[1] * ry, -ei[1] * rx + ei[0] * ry])

    def evaluate(self, s_i: float, s_j: float) -> "PairKinematics":
        """Separation measure with first and second derivatives.

        Derivatives are taken with respect to (s_i, s_j).  With w the
        body-frame relative vector, rho = |w|, Q = wx^4/a^4 + wy^4/b^4 and
        nu = rho * Q^(-1/4), the separation is d = rho - nu; its gradient and
        Hessian in w follow from straightforward calculus and are contracted
        with the constant tangents dw/ds_i = -(1,0), dw/ds_j = t_j.
        """
        w = self.rel_body(s_i, s_j)
        rho = float(np.hypot(w[0], w[1]))
        if rho < _COINCIDENT_TOL:
            raise GeometryError(
                f"coincident centers for pair at s_i={s_i}, s_j={s_j}"
            )
        a, b = self.spec.a_m, self.spec.b_m
        w_hat = w / rho

        qv = (w[0] / a) ** 4 + (w[1] / b) ** 4          # Q
        grad_q = np.array([4.0 * w[0] ** 3 / a ** 4, 4.0 * w[1] ** 3 / b ** 4])
        hess_q = np.diag([12.0 * w[0] ** 2 / a ** 4, 12.0 * w[1] ** 2 / b ** 4])

        g = qv ** -0.25                                  # Q^(-1/4)
        grad_g = -0.25 * qv ** -1.25 * grad_q
        hess_g = (5.0 / 16.0) * qv ** -2.25 * np.outer(grad_q, grad_q) \
            - 0.25 * qv ** -1.25 * hess_q

        nu = rho * g
        proj = np.eye(2) - np.outer(w_hat, w_hat)
        hess_rho = proj / rho
        grad_nu = g * w_hat + rho * grad_g
        hess_nu = (np.outer(w_hat, grad_g) + np.outer(grad_g, w_hat)
                   + rho * hess_g + g * hess_rho)

        grad_d_w = w_hat - grad_nu
        hess_d_w = hess_rho - hess_nu

        t_i = np.array([-1.0, 0.0])
        t_j = self.t_j
        tangents = np.stack([t_i, t_j])                  # rows: d w/d s_i, d w/d s_j
        grad_d = tangents @ grad_d_w                     # (d d/d s_i, d d/d s_j)
        hess_d = tangents @ hess_d_w @ tangents.T        # 2x2 over (s_i, s_j)

        # Line-of-sight alignment of each agent's heading, and its rate of
        # change as the sight line rotates with the path coordinates.
        k_i = float(w_hat[0])
        k_j = float(w_hat @ t_j)
        dwhat = (proj @ tangents.T) / rho                # columns: d w_hat/d s_a
        dk_i = dwhat[0, :].copy()
        dk_j = t_j @ dwhat

        return PairKinematics(
            w=w, rho=rho, w_hat=w_hat, nu=float(nu), d=float(rho - nu),
            grad_d=grad_d, hess_d=hess_d,
            k_i=k_i, k_j=k_j, dk_i=dk_i, dk_j=dk_j,
        )


@dataclass(frozen=True)
class PairKinematics:
    """Separation measure and derivatives at one pair configuration.

    ``grad_d``/``hess_d`` are with respect to (s_i, s_j); ``dk_i``/``dk_j``
    are the derivatives of the alignment factors with respect to the same.
    """

    w: np.ndarray
    rho: float
    w_hat: np.ndarray
    nu: float
    d: float
    grad_d: np.ndarray
    hess_d: np.ndarray
    k_i: float
    k_j: float
    dk_i: np.ndarray
    dk_j: np.ndarray

    def closing_rate(self, v_i: float, v_j: float) -> float:
        """Time derivative of d along the flow; negative when approaching."""
        return float(self.grad_d[0] * v_i + self.grad_d[1] * v_j)

    def closing_rate_partials(self, v_i: float, v_j: float):
        """Partials of the closing rate w.r.t. (v_i, v_j, s_i, s_j)."""
        dv = (float(self.grad_d[0]), float(self.grad_d[1]))
        ds = (
            float(self.hess_d[0, 0] * v_i + self.hess_d[1, 0] * v_j),
            float(self.hess_d[0, 1] * v_i + self.hess_d[1, 1] * v_j),
        )
        return dv, ds


def separation_distance(x: StackedState, pair: tuple[int, int],
                        geometry: PairGeometry) -> float:
    """Center distance minus boundary scale; negative iff j is inside i's
    keep-out region."""
    i, j = pair
    return geometry.evaluate(float(x.s[i]), float(x.s[j])).d


def separation_rate(x: StackedState, pair: tuple[int, int],
                    geometry: PairGeometry) -> float:
    """Time derivative of the separation distance along the current flow."""
    i, j = pair
    kin = geometry.evaluate(float(x.s[i]), float(x.s[j]))
    return kin.closing_rate(float(x.v[i]), float(x.v[j]))


@dataclass(frozen=True)
class ConflictGraph:
    """Undirected conflict relation between agents (0-based vertex ids)."""

    n_agents: int
    edges: frozenset

    def __post_init__(self):
        for (i, j) in self.edges:
            if i == j:
                raise GeometryError(f"self-edge ({i}, {j}) not allowed")
            if not (0 <= i < j < self.n_agents):
                raise GeometryError(f"edge ({i}, {j}) out of range or unordered")

    def conflict_set(self, i: int) -> tuple:
        """Partners j > i; each unordered pair appears in exactly one set."""
        return tuple(sorted(j for (a, j) in self.edges if a == i))

    @property
    def ordered_pairs(self) -> tuple:
        return tuple(sorted(self.edges))


def _min_separation_on_grid(geom: PairGeometry, s_i: np.ndarray,
                            s_j: np.ndarray) -> tuple[float, float, float]:
    """Minimum separation over the outer product of two coordinate grids."""
    xi = geom.path_i.px0_m + geom.path_i.px1 * s_i
    yi = geom.path_i.py0_m + geom.path_i.py1 * s_i
    xj = geom.path_j.px0_m + geom.path_j.px1 * s_j
    yj = geom.path_j.py0_m + geom.path_j.py1 * s_j
    rx = xj[None, :] - xi[:, None]
    ry = yj[None, :] - yi[:, None]
    ei = geom.path_i.direction
    wx = ei[0] * rx + ei[1] * ry
    wy = -ei[1] * rx + ei[0] * ry
    rho = np.hypot(wx, wy)
    q = (wx / geom.spec.a_m) ** 4 + (wy / geom.spec.b_m) ** 4
    with np.errstate(divide="ignore"):
        d = rho - rho * q ** -0.25
    d = np.where(rho < _COINCIDENT_TOL, -1.0, d)
    flat = int(np.argmin(d))
    ii, jj = np.unravel_index(flat, d.shape)
    return float(d[ii, jj]), float(s_i[ii]), float(s_j[jj])


def min_pair_separation(geom: PairGeometry, s_range_i: tuple[float, float],
                        s_range_j: tuple[float, float],
                        coarse_step: float = 0.5) -> float:
    """Minimum separation between two path segments, coarse grid + refinement."""
    si = np.arange(s_range_i[0], s_range_i[1] + coarse_step, coarse_step)
    sj = np.arange(s_range_j[0], s_range_j[1] + coarse_step, coarse_step)
    d0, si0, sj0 = _min_separation_on_grid(geom, si, sj)
    fine = 0.01
    si_f = np.arange(max(s_range_i[0], si0 - coarse_step),
                     min(s_range_i[1], si0 + coarse_step) + fine, fine)
    sj_f = np.arange(max(s_range_j[0], sj0 - coarse_step),
                     min(s_range_j[1], sj0 + coarse_step) + fine, fine)
    d1, _, _ = _min_separation_on_grid(geom, si_f, sj_f)
    return min(d0, d1)


def build_conflict_graph(
    paths: Sequence[LinearPath],
    params: Sequence[AgentParams],
    s_ranges: Sequence[tuple[float, float]],
    buffer_a_m: float,
    buffer_b_m: float,
    margin_m: float = 0.0,
) -> ConflictGraph:
    """Conflict graph from pairwise reachability of the keep-out regions.

    An edge (i, j) is present iff, somewhere along the two path segments,
    agent j's center enters agent i's keep-out superellipse (minimum
    separation below ``margin_m``).  Opposing parallel lanes whose lateral
    offset exceeds the keep-out half-width therefore produce no edge, while
    crossing paths always do.
    """
    n = len(paths)
    if n != len(params) or n != len(s_ranges):
        raise GeometryError("paths, params and s_ranges must align")
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            geom = PairGeometry.for_pair(paths[i], paths[j], params[i],
                                         params[j], buffer_a_m, buffer_b_m)
            d_min = min_pair_separation(geom, s_ranges[i], s_ranges[j])
            if d_min < margin_m:
                edges.add((i, j))
    return ConflictGraph(n_agents=n, edges=frozenset(edges))
