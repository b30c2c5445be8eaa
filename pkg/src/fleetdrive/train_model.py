"""Point-mass train model on level or graded track.

All forces are per unit mass (m s^-2) and all energies per unit mass
(J kg^-1); the train mass only scales reported energies.  Resistance is
the quadratic Davis form r(v) = r0 + r2*v^2, traction is power-limited
with H_a(v) = A/v, and braking is bounded by the constant H_b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from scipy.optimize import brentq

from .errors import SpeedCapExceeded

#: Fraction of the sustainable top speed usable by any strategy.  Every
#: acceleration integral has an integrable singularity at v_max where
#: traction exactly balances resistance, so profiles must stay clear of it.
SPEED_CAP_FRACTION = 0.99


@dataclass(frozen=True)
class TrainParams:
    """Physical constants of one train.

    Parameters
    ----------
    r0 : float
        Constant resistance term (m s^-2), > 0.
    r2 : float
        Quadratic resistance coefficient (m^-1), >= 0.
    traction_A : float
        Traction power constant A with H_a(v) = A/v (m^2 s^-3), > 0.
    brake_bound : float
        Maximum braking force per unit mass H_b (m s^-2), > 0.
    mass : float
        Train mass (kg), > 0.  Only used to scale reported energies.
    """

    r0: float
    r2: float
    traction_A: float
    brake_bound: float
    mass: float = 1.0

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError(f"r0 must be > 0, got {self.r0}")
        if self.r2 < 0:
            raise ValueError(f"r2 must be >= 0, got {self.r2}")
        if not self.traction_A > 0:
            raise ValueError(f"traction_A must be > 0, got {self.traction_A}")
        if not self.brake_bound > 0:
            raise ValueError(f"brake_bound must be > 0, got {self.brake_bound}")
        if not self.mass > 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")


@dataclass(frozen=True)
class TrackProfile:
    """Piecewise-constant track gradient g(x) in m s^-2.

    ``segments`` is an ordered tuple of (start position, value) pairs; the
    first segment must start at 0 and each segment extends to the start of
    the next (the last one extends indefinitely).  The default is level
    track, which is the only profile the solver accepts; graded profiles
    are consumed by the steepness classifiers and the simulator.
    """

    segments: tuple = field(default=((0.0, 0.0),))

    def __post_init__(self):
        segs = tuple((float(s), float(g)) for s, g in self.segments)
        if not segs:
            raise ValueError("TrackProfile needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first gradient segment must start at x=0")
        starts = [s for s, _ in segs]
        if starts != sorted(starts):
            raise ValueError("gradient segments must be ordered by start position")
        object.__setattr__(self, "segments", segs)

    def gradient(self, x: float) -> float:
        """Gradient acceleration at position x."""
        g = self.segments[0][1]
        for start, value in self.segments:
            if x < start:
                break
            g = value
        return g

    def gradient_range(self, x_lo: float, x_hi: float) -> tuple:
        """(min, max) of g over the position interval [x_lo, x_hi]."""
        values = [self.gradient(x_lo)]
        for start, value in self.segments:
            if x_lo < start <= x_hi:
                values.append(value)
        return min(values), max(values)

    @property
    def is_level(self) -> bool:
        return all(g == 0.0 for _, g in self.segments)


LEVEL_TRACK = TrackProfile()


def resistance(p: TrainParams, v: float) -> float:
    """Frictional deceleration r(v) = r0 + r2*v^2 at speed v >= 0."""
    return p.r0 + p.r2 * v * v


def phi(p: TrainParams, v: float) -> float:
    """Resistive power per unit mass phi(v) = v*r(v)."""
    return v * (p.r0 + p.r2 * v * v)


def phi_prime(p: TrainParams, v: float) -> float:
    """Derivative phi'(v) = r0 + 3*r2*v^2."""
    return p.r0 + 3.0 * p.r2 * v * v


def phi_double_prime(p: TrainParams, v: float) -> float:
    """Second derivative phi''(v) = 6*r2*v."""
    return 6.0 * p.r2 * v


def psi(p: TrainParams, v: float) -> float:
    """Auxiliary power psi(v) = v^2 * r'(v) = 2*r2*v^3."""
    return 2.0 * p.r2 * v ** 3


def max_traction(p: TrainParams, v: float) -> float:
    """Traction bound H_a(v) = A/v for v > 0."""
    return p.traction_A / v


def tangent_line(p: TrainParams, hold: float, v: float) -> float:
    """Tangent to the graph of phi at ``hold`` evaluated at ``v``.

    Strict convexity of phi (for r2 > 0) makes this a strict underestimate
    of phi(v) everywhere except at v = hold.
    """
    return phi(p, hold) + phi_prime(p, hold) * (v - hold)


@lru_cache(maxsize=None)
def max_sustainable_speed(p: TrainParams) -> float:
    """Unique v_max > 0 where traction power equals resistive power.

    Solves phi(v_max) = A; phi is strictly increasing and unbounded so a
    root always exists.
    """
    if p.r2 == 0.0:
        return p.traction_A / p.r0
    hi = 1.0
    while phi(p, hi) < p.traction_A:
        hi *= 2.0
    return brentq(lambda v: phi(p, v) - p.traction_A, 0.0, hi, xtol=1e-12)


def speed_cap(p: TrainParams) -> float:
    """Hard upper bound 0.99 * v_max on any profile speed."""
    return SPEED_CAP_FRACTION * max_sustainable_speed(p)


def check_speed(p: TrainParams, v: float) -> float:
    """Return v, raising SpeedCapExceeded if it is above the cap."""
    cap = speed_cap(p)
    if v > cap:
        raise SpeedCapExceeded(f"speed {v:.4f} m/s exceeds cap {cap:.4f} m/s")
    return v


def optimal_braking_speed(p: TrainParams, hold: float) -> float:
    """Coast-to-brake switch speed U = V - phi(V)/phi'(V) below a hold at V.

    Equals psi(V)/phi'(V); degenerates to 0 when resistance is constant
    (r2 = 0, phi linear).
    """
    if hold <= 0:
        raise ValueError(f"hold speed must be > 0, got {hold}")
    return hold - phi(p, hold) / phi_prime(p, hold)


def classify_steep(
    p: TrainParams,
    profile: TrackProfile,
    w: float,
    interval: tuple,
) -> str:
    """Classify a position interval at target speed w.

    Returns ``"steep_uphill"`` if full traction cannot hold speed w
    anywhere on the interval, ``"steep_downhill"`` if resistance cannot
    prevent acceleration anywhere on it, and ``"neither"`` otherwise.
    """
    if w <= 0:
        raise ValueError(f"speed must be > 0, got {w}")
    x_lo, x_hi = interval
    g_min, g_max = profile.gradient_range(x_lo, x_hi)
    r = resistance(p, w)
    if max_traction(p, w) - r + g_max < 0:
        return "steep_uphill"
    if -r + g_min > 0:
        return "steep_downhill"
    return "neither"
