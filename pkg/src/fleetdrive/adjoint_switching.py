"""Modified adjoint variable and the switching-speed root solves.

On level track the costate is lambda(t) = kappa = phi'(V) for the whole
journey, and the rescaled adjoint eta = mu/v evolves along each phase as

* maximum acceleration: eta = (1+w) * (A - L_V(v)) / (A - phi(v)),
* speedhold:            eta = 1 + w,
* coast:                eta = (1+w) * L_V(v) / phi(v),

where L_V is the tangent to phi at the interval's hold speed V and w the
interval's weight.  Requiring eta to be continuous where two intervals
meet fixes the boundary speed W; eliminating the weights through
1 + w = phi'(V_base)/phi'(V_hold) gives the polynomial-free residual

    phi'(V_next) * phi(W) * [A - L_{V_prev}(W)]
        = phi'(V_prev) * [A - phi(W)] * L_{V_next}(W)

for a drop in hold speed (W above both), and the mirrored form for a
rise (W below both).  It depends only on the two hold speeds, which is
what makes the boundary-speed sensitivities well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy.optimize import brentq

from .errors import InvalidPhase, NoRoot, WeightTooLarge
from .phase_kinematics import PhaseKind
from .train_model import (
    TrainParams,
    phi,
    phi_prime,
    speed_cap,
    tangent_line,
)

#: Relative speed difference below which two adjacent hold speeds are
#: treated as equal (no transition at the boundary).
EQUAL_SPEED_RTOL = 1e-12


@dataclass(frozen=True)
class IntervalWeights:
    """Non-negative weights w_0..w_n, one per grid interval."""

    w: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if any(x < 0 for x in w):
            raise ValueError(f"weights must be non-negative, got {w}")
        object.__setattr__(self, "w", w)

    @property
    def active_set(self) -> tuple:
        return tuple(k for k, x in enumerate(self.w) if x > 0)

    def __len__(self):
        return len(self.w)

    def __getitem__(self, k):
        return self.w[k]


@dataclass(frozen=True)
class AdjointConstants:
    """Per-train costate constant kappa = phi'(V) (level track)."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @classmethod
    def from_speed(cls, p: TrainParams, v: float) -> "AdjointConstants":
        return cls(kappa=phi_prime(p, v))


def eta(
    p: TrainParams,
    phase: PhaseKind,
    v: float,
    v_hold: float,
    w: float = 0.0,
) -> float:
    """Modified adjoint eta at speed v on a phase of the given kind.

    ``v_hold`` is the hold speed of the interval the phase lies in and
    ``w`` its weight (0 on unconstrained intervals).
    """
    if phase is PhaseKind.MAX_BRAKE:
        raise InvalidPhase("eta is not tracked through the final braking phase")
    if not 0 < v <= speed_cap(p):
        raise ValueError(f"speed {v} outside (0, speed cap]")
    scale = 1.0 + w
    if phase is PhaseKind.SPEEDHOLD:
        return scale
    L = tangent_line(p, v_hold, v)
    A = p.traction_A
    if phase is PhaseKind.MAX_ACCEL:
        return scale * (A - L) / (A - phi(p, v))
    return scale * L / phi(p, v)


def constrained_speed(p: TrainParams, v_base: float, w: float) -> float:
    """Hold speed on an interval of weight w for base speed ``v_base``.

    Solves phi'(V_k) = phi'(v_base) / (1 + w); the result is below
    ``v_base`` for w > 0 and equals it for w = 0.  Weights w in (-1, 0)
    are accepted and give a hold speed above ``v_base`` (used while the
    solver explores); the result is always kept under the speed cap.
    """
    if w <= -1.0:
        raise ValueError(f"weight must be > -1, got {w}")
    if v_base <= 0:
        raise ValueError(f"base speed must be > 0, got {v_base}")
    if w == 0.0:
        return v_base
    target = phi_prime(p, v_base) / (1.0 + w)
    if target <= p.r0:
        raise WeightTooLarge(
            f"weight {w} pushes the target slope {target:.3e} to or below "
            f"phi'(0) = r0 = {p.r0:.3e}; no positive hold speed exists"
        )
    cap = speed_cap(p)
    if w > 0:
        lo, hi = 0.0, v_base
    else:
        lo, hi = v_base, cap
        if phi_prime(p, cap) < target:
            from .errors import SpeedCapExceeded

            raise SpeedCapExceeded(
                f"weight {w} requires a hold speed above the cap {cap:.3f}"
            )
    return brentq(lambda v: phi_prime(p, v) - target, lo, hi, xtol=1e-12)


def _switch_residual(p: TrainParams, v_high: float, v_low: float, w: float) -> float:
    """Continuity residual at candidate boundary speed w.

    ``v_high`` is the hold speed whose phase is maximum acceleration at
    the boundary and ``v_low`` the one whose phase is coast.
    """
    A = p.traction_A
    return phi_prime(p, v_low) * phi(p, w) * (A - tangent_line(p, v_high, w)) - (
        phi_prime(p, v_high) * (A - phi(p, w)) * tangent_line(p, v_low, w)
    )


def _solve_switch(p: TrainParams, v_high: float, v_low: float, lo: float, hi: float):
    f_lo = _switch_residual(p, v_high, v_low, lo)
    f_hi = _switch_residual(p, v_high, v_low, hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NoRoot(
            "no switching speed in bracket "
            f"[{lo:.6f}, {hi:.6f}] for hold speeds {v_high:.6f}/{v_low:.6f} "
            f"(residuals {f_lo:.3e}, {f_hi:.3e})"
        )
    return brentq(
        lambda w: _switch_residual(p, v_high, v_low, w), lo, hi, xtol=1e-12
    )


def switching_speed(
    p: TrainParams,
    v_prev: float,
    w_prev: float,
    v_next: float,
    w_next: float,
) -> float:
    """Boundary speed W between two adjacent intervals.

    ``v_prev``/``v_next`` are the hold speeds before and after the
    boundary, ``w_prev``/``w_next`` the interval weights (only used to
    recognise the degenerate equal case; the continuity equation itself
    is weight-free).  A drop in hold speed is crossed by accelerating to
    W > v_prev and coasting down; a rise by coasting to W < v_prev and
    accelerating up.
    """
    if v_prev <= 0 or v_next <= 0:
        raise ValueError("hold speeds must be positive")
    if abs(v_prev - v_next) <= EQUAL_SPEED_RTOL * max(v_prev, v_next):
        return v_prev
    cap = speed_cap(p)
    if v_prev > v_next:
        # accelerate above v_prev, then coast down to v_next
        return _solve_switch(p, v_prev, v_next, v_prev, cap)
    # coast below v_prev, then accelerate up to v_next
    return _solve_switch(p, v_next, v_prev, 1e-9 * cap, v_prev)


def switching_sensitivities(
    p: TrainParams,
    v_prev: float,
    w_prev: float,
    v_next: float,
    w_next: float,
    rel_step: float = 1e-5,
) -> tuple:
    """(dW/dV_prev, dW/dV_next) by central finite differences.

    The boundary speed rises with the earlier hold speed and falls with
    the later one, in both the drop and the rise configurations.
    """
    h_prev = rel_step * v_prev
    h_next = rel_step * v_next
    d_prev = (
        switching_speed(p, v_prev + h_prev, w_prev, v_next, w_next)
        - switching_speed(p, v_prev - h_prev, w_prev, v_next, w_next)
    ) / (2.0 * h_prev)
    d_next = (
        switching_speed(p, v_prev, w_prev, v_next + h_next, w_next)
        - switching_speed(p, v_prev, w_prev, v_next - h_next, w_next)
    ) / (2.0 * h_next)
    return d_prev, d_next
