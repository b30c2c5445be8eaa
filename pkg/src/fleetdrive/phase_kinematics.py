"""Duration, distance and energy of the four control phases on level track.

The level-track dynamics are v' = u_a - u_b - r(v).  Re-parameterising by
speed gives, per phase,

* maximum acceleration (u_a = A/v):  dt = v dv / (A - phi(v)),
  dx = v^2 dv / (A - phi(v)),  dE = A v dv / (A - phi(v)),
* coast (u_a = u_b = 0):  dt = dv / r(v),  dx = v dv / r(v),  dE = 0,
* maximum brake (u_b = H_b):  dt = dv / (H_b + r(v)),
  dx = v dv / (H_b + r(v)),  dE = 0,
* speedhold at V for time dt:  distance V dt, energy phi(V) dt.

Coast and brake integrals have closed forms for quadratic resistance
(arctan / log); acceleration integrals are evaluated with adaptive
Gauss-Kronrod quadrature at relative tolerance 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.integrate import quad

from .errors import InvalidPhase, SpeedCapExceeded
from .train_model import TrainParams, check_speed, phi, resistance

QUAD_RTOL = 1e-10
QUAD_ATOL = 1e-12


class PhaseKind(Enum):
    MAX_ACCEL = "max_accel"
    SPEEDHOLD = "speedhold"
    COAST = "coast"
    MAX_BRAKE = "max_brake"


@dataclass(frozen=True)
class PhaseMetrics:
    """Duration (s), distance (m) and energy (J per unit mass) of a phase."""

    duration: float
    distance: float
    energy: float

    def __add__(self, other: "PhaseMetrics") -> "PhaseMetrics":
        return PhaseMetrics(
            self.duration + other.duration,
            self.distance + other.distance,
            self.energy + other.energy,
        )


ZERO_METRICS = PhaseMetrics(0.0, 0.0, 0.0)


def _quad(f, a: float, b: float) -> float:
    value, _ = quad(f, a, b, epsabs=QUAD_ATOL, epsrel=QUAD_RTOL, limit=200)
    return value


def accel_metrics(p: TrainParams, v_from: float, v_to: float) -> PhaseMetrics:
    """Metrics of a maximum-acceleration phase from v_from up to v_to.

    The traction power is exactly A throughout, so energy = A * duration;
    both is computed by quadrature and checked against that identity.
    """
    if v_from < 0 or v_from > v_to:
        raise InvalidPhase(
            f"acceleration needs 0 <= v_from <= v_to, got {v_from} -> {v_to}"
        )
    check_speed(p, v_to)
    if v_from == v_to:
        return ZERO_METRICS
    A = p.traction_A

    def gap(v):
        return A - phi(p, v)

    duration = _quad(lambda v: v / gap(v), v_from, v_to)
    distance = _quad(lambda v: v * v / gap(v), v_from, v_to)
    energy = _quad(lambda v: A * v / gap(v), v_from, v_to)
    if abs(energy - A * duration) > 1e-9 * max(abs(energy), 1e-30):
        raise AssertionError(
            f"acceleration energy {energy} inconsistent with A*t {A * duration}"
        )
    return PhaseMetrics(duration, distance, energy)


def _decel_closed_form(r_const: float, r2: float, v_hi: float, v_lo: float):
    """Time and distance while decelerating under v' = -(r_const + r2 v^2)."""
    if r2 > 0:
        c = math.sqrt(r2 / r_const)
        duration = (math.atan(c * v_hi) - math.atan(c * v_lo)) / math.sqrt(
            r_const * r2
        )
        distance = math.log(
            (r_const + r2 * v_hi * v_hi) / (r_const + r2 * v_lo * v_lo)
        ) / (2.0 * r2)
    else:
        duration = (v_hi - v_lo) / r_const
        distance = (v_hi * v_hi - v_lo * v_lo) / (2.0 * r_const)
    return duration, distance


def coast_metrics(p: TrainParams, v_from: float, v_to: float) -> PhaseMetrics:
    """Metrics of a coast phase decelerating from v_from down to v_to."""
    if v_to < 0 or v_from < v_to:
        raise InvalidPhase(f"coast needs v_from >= v_to >= 0, got {v_from} -> {v_to}")
    check_speed(p, v_from)
    if v_from == v_to:
        return ZERO_METRICS
    duration, distance = _decel_closed_form(p.r0, p.r2, v_from, v_to)
    return PhaseMetrics(duration, distance, 0.0)


def brake_metrics(p: TrainParams, v_from: float, v_to: float) -> PhaseMetrics:
    """Metrics of a maximum-brake phase from v_from down to v_to."""
    if v_to < 0 or v_from < v_to:
        raise InvalidPhase(f"brake needs v_from >= v_to >= 0, got {v_from} -> {v_to}")
    check_speed(p, v_from)
    if v_from == v_to:
        return ZERO_METRICS
    duration, distance = _decel_closed_form(p.r0 + p.brake_bound, p.r2, v_from, v_to)
    return PhaseMetrics(duration, distance, 0.0)


def hold_metrics(p: TrainParams, hold: float, dt: float) -> PhaseMetrics:
    """Metrics of a speedhold at ``hold`` lasting ``dt`` seconds."""
    if dt < 0:
        raise InvalidPhase(f"hold duration must be >= 0, got {dt}")
    if hold <= 0:
        raise InvalidPhase(f"hold speed must be > 0, got {hold}")
    check_speed(p, hold)
    return PhaseMetrics(dt, hold * dt, phi(p, hold) * dt)


def coast_speed_after(p: TrainParams, v0: float, tau: float) -> float:
    """Speed after coasting for ``tau`` seconds from v0 (closed form)."""
    if p.r2 > 0:
        c = math.sqrt(p.r2 / p.r0)
        angle = math.atan(c * v0) - math.sqrt(p.r0 * p.r2) * tau
        return min(max(math.tan(angle) / c, 0.0), v0)
    return max(v0 - p.r0 * tau, 0.0)


def brake_speed_after(p: TrainParams, v0: float, tau: float) -> float:
    """Speed after full braking for ``tau`` seconds from v0 (closed form)."""
    r_const = p.r0 + p.brake_bound
    if p.r2 > 0:
        c = math.sqrt(p.r2 / r_const)
        angle = math.atan(c * v0) - math.sqrt(r_const * p.r2) * tau
        return min(max(math.tan(angle) / c, 0.0), v0)
    return max(v0 - r_const * tau, 0.0)


def accel_speed_after(p: TrainParams, v0: float, tau: float) -> float:
    """Speed after accelerating at full power for ``tau`` seconds from v0."""
    from scipy.optimize import brentq

    from .train_model import speed_cap

    if tau <= 0:
        return v0
    hi = speed_cap(p)

    def overshoot(v):
        return accel_metrics(p, v0, v).duration - tau

    if overshoot(hi) < 0:
        raise SpeedCapExceeded(
            f"acceleration for {tau} s from {v0} m/s exceeds the speed cap"
        )
    return brentq(overshoot, v0, hi, xtol=1e-12)
