"""Softplus smoothing of the max operator, with declared side contracts.

The safety-distance construction needs ``max{c, x}`` in three places but the
barrier must stay continuously differentiable, so each max is replaced by

    smooth_max(c, x) = c + softplus_b2((x - c) - b1)

where ``softplus_b2(t) = ln(1 + exp(t * b2)) / b2`` and ``b1 >= 0`` shifts
the knee to the right of the true corner.  With ``b1 = 0`` this is the
log-sum-exp bound, which lies on or above the true max everywhere.  With
``b1 > 0`` the curve drops below the max to the right of the corner while
the excess on the left branch decays like ``exp(-b1 b2) / b2``; once
``b1 * b2`` is large enough, that excess is below double-precision rounding
and the instance is a true under-approximation in floating point.

Every instance declares which side it must stay on, and the declared
contract is checked densely at construction time; a violating
parameterization fails fast rather than silently weakening the safety
argument downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_SIDES = ("over", "under")


def _softplus(t: float) -> float:
    # log(1 + e^t), safe against overflow for large |t|
    if t > 35.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


def _sigmoid(t: float) -> float:
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class SmoothMaxParams:
    """One smoothed-max instance: knee shift, sharpness and declared side."""

    b1: float
    b2: float
    side: str

    def __post_init__(self):
        if self.b2 <= 0.0:
            raise ValueError(f"b2 must be positive, got {self.b2}")
        if self.b1 < 0.0:
            raise ValueError(f"b1 must be non-negative, got {self.b1}")
        if self.side not in _SIDES:
            raise ValueError(f"side must be one of {_SIDES}, got {self.side!r}")


def smooth_max(c: float, x: float, params: SmoothMaxParams) -> float:
    """Smooth stand-in for max{c, x}: tends to c as x -> -inf and to
    c + (x - c) - b1 as x -> +inf, monotone in x."""
    return c + _softplus(((x - c) - params.b1) * params.b2) / params.b2


def smooth_max_dx(c: float, x: float, params: SmoothMaxParams) -> float:
    """Derivative of smooth_max with respect to the varying argument x."""
    return _sigmoid(((x - c) - params.b1) * params.b2)


def validate_side(params: SmoothMaxParams, operating_range: tuple[float, float],
                  samples: int = 20001) -> None:
    """Check the declared side contract by dense sampling.

    The gap smooth_max(c, x) - max(c, x) depends only on x - c, so sampling
    the offset t = x - c over the (symmetrized) operating range covers every
    constant arm c the instance will see.  Raises ValueError on violation.
    """
    lo, hi = operating_range
    span = hi - lo
    t = np.linspace(-span, span, samples)
    t = np.append(t, [0.0, params.b1])  # exact corner and knee
    z = (t - params.b1) * params.b2
    sp = np.empty_like(z)
    big = z > 35.0
    sp[big] = z[big] + np.log1p(np.exp(-z[big]))
    sp[~big] = np.log1p(np.exp(z[~big]))
    gap = sp / params.b2 - np.maximum(0.0, t)
    if params.side == "over":
        worst = float(np.min(gap))
        if worst < -1e-12:
            raise ValueError(
                f"over-side contract violated: smooth max dips {worst:.3e} "
                f"below the exact max (b1={params.b1}, b2={params.b2})"
            )
    else:
        worst = float(np.max(gap))
        if worst > 1e-12:
            raise ValueError(
                f"under-side contract violated: smooth max exceeds the exact "
                f"max by {worst:.3e} (b1={params.b1}, b2={params.b2})"
            )
    # Beyond the knee neighbourhood the approximation must stay tight.
    far = np.abs(t - params.b1) >= 5.0 / params.b2
    worst_gap = float(np.max(np.abs(gap[far]))) if np.any(far) else 0.0
    if worst_gap > 0.05:
        raise ValueError(
            f"smooth max strays {worst_gap:.3e} (> 0.05) from the exact max "
            f"away from the knee (b1={params.b1}, b2={params.b2})"
        )


def _default_closing() -> SmoothMaxParams:
    return SmoothMaxParams(b1=0.0, b2=20.0, side="over")


def _default_braking() -> SmoothMaxParams:
    return SmoothMaxParams(b1=0.0, b2=20.0, side="over")


def _default_authority() -> SmoothMaxParams:
    return SmoothMaxParams(b1=0.04, b2=1000.0, side="under")


@dataclass(frozen=True)
class SmoothingSet:
    """The three smoothed-max instances used by the collision barrier.

    closing    over-approximates max{0, closing speed} in the numerator of
               the safety distance (more demanded stopping distance: safe).
    braking    bounds max{u_min, -lambda v} from above, i.e. understates the
               braking magnitude an agent can commit (safe).
    authority  under-approximates max{eps, projected deceleration} in the
               denominator (less assumed stopping authority: safe).

    ``epsilon_mps2`` is the denominator guard that keeps the safety distance
    finite once both agents have passed the crossing point.
    """

    closing: SmoothMaxParams = field(default_factory=_default_closing)
    braking: SmoothMaxParams = field(default_factory=_default_braking)
    authority: SmoothMaxParams = field(default_factory=_default_authority)
    epsilon_mps2: float = 0.1
    operating_range: tuple[float, float] = (-30.0, 30.0)

    def __post_init__(self):
        if self.epsilon_mps2 <= 0.0:
            raise ValueError(f"epsilon_mps2 must be positive, got {self.epsilon_mps2}")
        if self.closing.side != "over":
            raise ValueError("closing-speed smoothing must be an over-side instance")
        if self.braking.side != "over":
            raise ValueError("braking smoothing must be an over-side instance "
                             "(understates the braking magnitude)")
        if self.authority.side != "under":
            raise ValueError("authority smoothing must be an under-side instance")
        for inst in (self.closing, self.braking, self.authority):
            validate_side(inst, self.operating_range)
