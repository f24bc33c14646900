"""Dense min-norm quadratic program:  min 1/2 |u - u_nom|^2  s.t. rows + box.

The Hessian is the identity, so the problem is the Euclidean projection of
``u_nom`` onto the polytope  {u : A u >= b, lb <= u <= ub}  and a dual
active-set iteration over constraint normals solves it exactly in a finite
number of steps.  The iteration starts from the box-clamped nominal control
(whose clamped components form a working set with non-negative multipliers),
repeatedly targets the most violated constraint, and drops working rows
whose multipliers would go negative.  Ties are broken by lowest constraint
index, so identical inputs yield bit-identical outputs.

Infeasibility is certified exactly, never patched over: when a violated
constraint's normal is a non-positive combination of the working normals,
the working rows already imply the new row can never hold (a Farkas
certificate) and the solver reports ``infeasible``.

Box bounds are handled as ordinary rows with indices appended after the
problem rows: first the ``n`` lower bounds, then the ``n`` upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .barriers import ConstraintRow

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"

_DROP_TOL = 1e-11
_NULL_TOL = 1e-11


@dataclass
class QpProblem:
    """Projection problem data: nominal control, inequality rows, box."""

    n: int
    u_nom: np.ndarray
    rows: list
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.u_nom = np.asarray(self.u_nom, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.u_nom.shape != (self.n,):
            raise ValueError("u_nom shape mismatch")
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise ValueError("box bound shape mismatch")
        if not np.all(self.lb < self.ub):
            raise ValueError("need lb < ub componentwise")
        for arr in (self.u_nom, self.lb, self.ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite problem data")
        for row in self.rows:
            if not (np.all(np.isfinite(row.coeffs)) and np.isfinite(row.rhs_floor)):
                raise ValueError(f"non-finite coefficients in row {row.name}")

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All constraints as A u >= b, box bounds appended after the rows."""
        m = len(self.rows)
        a = np.zeros((m + 2 * self.n, self.n))
        b = np.zeros(m + 2 * self.n)
        for k, row in enumerate(self.rows):
            a[k] = row.coeffs
            b[k] = row.rhs_floor
        for k in range(self.n):
            a[m + k, k] = 1.0
            b[m + k] = self.lb[k]
            a[m + self.n + k, k] = -1.0
            b[m + self.n + k] = -self.ub[k]
        return a, b


@dataclass
class QpSolution:
    u_star: np.ndarray
    status: str
    kkt_residual: float
    active_set: tuple
    iterations: int
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual,
                   self.complementarity)


class ActiveSetSolver:
    """Reusable min-norm projection solver.

    Not thread-safe across concurrent ``solve`` calls on the same instance
    only in the sense that instances are so cheap there is no reason to
    share one; use one instance per thread.
    """

    def __init__(self, feas_tol: float = 1e-9, max_iter_factor: int = 50):
        self.feas_tol = feas_tol
        self.max_iter_factor = max_iter_factor

    def solve(self, qp: QpProblem,
              warm_start: Optional[Sequence[int]] = None) -> QpSolution:
        a, b = qp.stacked()
        m_total = a.shape[0]
        max_iter = self.max_iter_factor * (qp.n + m_total)

        u, work, lam = self._initial_state(qp, a, b, warm_start)
        iterations = 0
        status = MAX_ITER
        infeasible = False
        while iterations < max_iter:
            iterations += 1
            slack = a @ u - b
            target = int(np.argmin(slack))
            if slack[target] >= -self.feas_tol:
                status = OPTIMAL
                break
            step = self._take_in(u, work, lam, a, b, target)
            if step is None:
                infeasible = True
                break
            u, work, lam = step

        multipliers = np.zeros(m_total)
        for t, r in enumerate(work):
            multipliers[r] = lam[t]
        if infeasible:
            return QpSolution(u_star=u.copy(), status=INFEASIBLE,
                              kkt_residual=float("inf"),
                              active_set=tuple(work), iterations=iterations,
                              multipliers=multipliers)
        kkt = verify_kkt_arrays(qp.u_nom, a, b, u, multipliers).max_residual \
            if status == OPTIMAL else float("inf")
        return QpSolution(u_star=u.copy(), status=status, kkt_residual=kkt,
                          active_set=tuple(work), iterations=iterations,
                          multipliers=multipliers)

    def _initial_state(self, qp, a, b, warm_start):
        """Valid dual-feasible start: active working set, lam >= 0,
        stationarity u - u_nom = sum(lam_r a_r)."""
        if warm_start:
            work: list = []
            for r in warm_start:
                r = int(r)
                if 0 <= r < a.shape[0] and r not in work:
                    cand = work + [r]
                    n_mat = a[cand].T
                    if np.linalg.matrix_rank(n_mat, tol=1e-10) == len(cand):
                        work = cand
                if len(work) == qp.n:
                    break
            u, lam = _project(qp.u_nom, a, b, work)
            # Restore dual feasibility by dropping negative multipliers.
            while True:
                neg = [t for t in range(len(work)) if lam[t] < -_DROP_TOL]
                if not neg:
                    break
                worst = min(neg, key=lambda t: (lam[t], work[t]))
                work.pop(worst)
                u, lam = _project(qp.u_nom, a, b, work)
            return u, work, [max(0.0, v) for v in lam]

        m = len(qp.rows)
        work = []
        lam = []
        u = qp.u_nom.copy()
        for k in range(qp.n):
            if qp.u_nom[k] < qp.lb[k]:
                work.append(m + k)
                lam.append(qp.lb[k] - qp.u_nom[k])
                u[k] = qp.lb[k]
            elif qp.u_nom[k] > qp.ub[k]:
                work.append(m + qp.n + k)
                lam.append(qp.u_nom[k] - qp.ub[k])
                u[k] = qp.ub[k]
        return u, work, lam

    def _take_in(self, u, work, lam, a, b, target):
        """Bring the violated constraint ``target`` into the working set.

        Alternates primal steps along the null space of the working normals
        with dual steps that drop blocking rows; returns the new state or
        None when a Farkas certificate proves joint infeasibility.
        """
        u = u.copy()
        work = list(work)
        lam = list(lam)
        p = a[target]
        lam_new = 0.0
        while True:
            if work:
                n_mat = a[work].T                      # n x k
                gram = n_mat.T @ n_mat
                rvec = np.linalg.solve(gram, n_mat.T @ p)
                z = p - n_mat @ rvec
            else:
                rvec = np.zeros(0)
                z = p.copy()
            z_norm2 = float(z @ z)

            slack_t = float(a[target] @ u - b[target])
            t_primal = -slack_t / z_norm2 if z_norm2 > _NULL_TOL else np.inf

            blockers = [t for t in range(len(work)) if rvec[t] > _NULL_TOL]
            if blockers:
                t_dual, blocker = min(
                    ((lam[t] / rvec[t], t) for t in blockers),
                    key=lambda pair: (pair[0], work[pair[1]]),
                )
            else:
                t_dual, blocker = np.inf, None

            step = min(t_primal, t_dual)
            if not np.isfinite(step):
                return None                            # Farkas certificate
            for t in range(len(work)):
                lam[t] -= step * rvec[t]
            lam_new += step
            if z_norm2 > _NULL_TOL:
                u += step * z
            if t_primal <= t_dual:
                work.append(target)
                lam.append(lam_new)
                return u, work, lam
            work.pop(blocker)
            lam.pop(blocker)


def _project(u_nom: np.ndarray, a: np.ndarray, b: np.ndarray,
             work: Sequence[int]):
    """Projection of u_nom onto the equalities of the working set, with the
    multipliers of the equality-constrained subproblem."""
    if not work:
        return u_nom.copy(), []
    n_mat = a[list(work)].T
    gram = n_mat.T @ n_mat
    lam = np.linalg.solve(gram, b[list(work)] - n_mat.T @ u_nom)
    return u_nom + n_mat @ lam, list(lam)


def verify_kkt_arrays(u_nom: np.ndarray, a: np.ndarray, b: np.ndarray,
                      u: np.ndarray, multipliers: np.ndarray) -> KktReport:
    grad = (u - u_nom) - a.T @ multipliers
    slack = a @ u - b
    return KktReport(
        stationarity=float(np.max(np.abs(grad))) if grad.size else 0.0,
        primal=float(max(0.0, -np.min(slack))) if slack.size else 0.0,
        dual=float(max(0.0, -np.min(multipliers))) if multipliers.size else 0.0,
        complementarity=float(np.max(np.abs(multipliers * slack)))
        if slack.size else 0.0,
    )


def verify_kkt(qp: QpProblem, sol: QpSolution) -> KktReport:
    """Recompute all first-order optimality residuals for a solved problem."""
    if sol.status != OPTIMAL:
        raise ValueError(f"verify_kkt requires an optimal solution, "
                         f"got status={sol.status!r}")
    a, b = qp.stacked()
    return verify_kkt_arrays(qp.u_nom, a, b, sol.u_star, sol.multipliers)
