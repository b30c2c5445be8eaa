"""Assembly and evaluation of single-train speed profiles of optimal type.

A strategy of optimal type is fully determined by the base (unconstrained)
cruise speed V, the interval weights, and the grid: each interval k holds
the reduced speed V_k given by the weight relation, adjacent intervals
with different hold speeds are joined by an accelerate/coast pair crossing
the boundary speed W_k exactly at t_k, the journey starts with maximum
acceleration from rest and ends with coast to the optimal braking speed
followed by maximum brake, reaching rest exactly at t = T.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .adjoint_switching import constrained_speed, switching_speed
from .errors import InfeasibleTiming
from .phase_kinematics import (
    PhaseKind,
    PhaseMetrics,
    accel_metrics,
    accel_speed_after,
    brake_metrics,
    brake_speed_after,
    coast_metrics,
    coast_speed_after,
    hold_metrics,
)
from .train_model import (
    TrainParams,
    check_speed,
    max_traction,
    optimal_braking_speed,
    phi,
    resistance,
)

#: Hold windows shorter than this (s) are treated as zero-length; anything
#: more negative is an infeasible timing.
HOLD_SLACK = 1e-9


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    t_start: float
    t_end: float
    v_start: float
    v_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class SpeedProfile:
    """Ordered control phases tiling [0, T] for one train."""

    phases: tuple
    grid: tuple
    train_index: int = 0

    @property
    def horizon(self) -> float:
        return self.grid[-1]

    def phase_at(self, t: float) -> Phase:
        """Phase whose time window contains t (later phase at a join)."""
        starts = [ph.t_start for ph in self.phases]
        i = bisect.bisect_right(starts, t) - 1
        return self.phases[max(i, 0)]


@dataclass(frozen=True)
class ProfileEvaluation:
    """Distance, per-interval energies and boundary speeds of a profile."""

    total_distance: float
    interval_energy: tuple
    total_energy: float
    transition_speeds: tuple
    braking_speed: float


def _transition(p: TrainParams, v_prev: float, v_next: float):
    """Boundary speed and the (pre, post) phase specs joining two holds."""
    w_speed = switching_speed(p, v_prev, 0.0, v_next, 0.0)
    if v_prev > v_next:
        pre = (PhaseKind.MAX_ACCEL, v_prev, w_speed, accel_metrics(p, v_prev, w_speed))
        post = (PhaseKind.COAST, w_speed, v_next, coast_metrics(p, w_speed, v_next))
    else:
        pre = (PhaseKind.COAST, v_prev, w_speed, coast_metrics(p, v_prev, w_speed))
        post = (PhaseKind.MAX_ACCEL, w_speed, v_next, accel_metrics(p, w_speed, v_next))
    return w_speed, pre, post


def build_profile_from_hold_speeds(
    p: TrainParams,
    hold_speeds,
    grid,
    train_index: int = 0,
) -> SpeedProfile:
    """Assemble a profile of optimal type from explicit per-interval holds.

    ``hold_speeds`` has one entry per grid interval.  Raises
    InfeasibleTiming when the transition phases around some interval do
    not leave room for a non-negative hold window.
    """
    grid = tuple(float(t) for t in grid)
    holds = [float(v) for v in hold_speeds]
    n_int = len(grid) - 1
    if len(holds) != n_int:
        raise ValueError(
            f"need one hold speed per interval: {len(holds)} holds, {n_int} intervals"
        )
    if any(grid[i] >= grid[i + 1] for i in range(n_int)):
        raise ValueError(f"grid must be strictly increasing, got {grid}")
    for v in holds:
        if v <= 0:
            raise ValueError(f"hold speeds must be positive, got {v}")
        check_speed(p, v)
    horizon = grid[-1]

    transitions = {}
    for k in range(1, n_int):
        if holds[k - 1] != holds[k]:
            transitions[k] = _transition(p, holds[k - 1], holds[k])

    initial = accel_metrics(p, 0.0, holds[0])
    u_brake = optimal_braking_speed(p, holds[-1])
    final_coast = coast_metrics(p, holds[-1], u_brake)
    final_brake = brake_metrics(p, u_brake, 0.0)

    # hold windows: what is left of each interval after transition phases
    starts, ends = [], []
    for k in range(n_int):
        if k == 0:
            start = grid[0] + initial.duration
        elif k in transitions:
            start = grid[k] + transitions[k][2][3].duration
        else:
            start = grid[k]
        if k == n_int - 1:
            end = horizon - final_brake.duration - final_coast.duration
        elif (k + 1) in transitions:
            end = grid[k + 1] - transitions[k + 1][1][3].duration
        else:
            end = grid[k + 1]
        if end - start < -HOLD_SLACK:
            raise InfeasibleTiming(
                f"interval {k} ({grid[k]:.1f}..{grid[k + 1]:.1f} s): transition "
                f"phases exceed the interval by {start - end:.3e} s",
                boundary=k,
            )
        starts.append(start)
        ends.append(end)

    phases = [Phase(PhaseKind.MAX_ACCEL, 0.0, initial.duration, 0.0, holds[0])]
    for k in range(n_int):
        if k > 0 and k in transitions:
            kind, v0, v1, metrics = transitions[k][2]
            phases.append(Phase(kind, grid[k], grid[k] + metrics.duration, v0, v1))
        if ends[k] > starts[k]:
            phases.append(
                Phase(PhaseKind.SPEEDHOLD, starts[k], ends[k], holds[k], holds[k])
            )
        if k + 1 in transitions:
            kind, v0, v1, metrics = transitions[k + 1][1]
            phases.append(
                Phase(kind, grid[k + 1] - metrics.duration, grid[k + 1], v0, v1)
            )
    brake_start = horizon - final_brake.duration
    if final_coast.duration > 0:
        phases.append(
            Phase(
                PhaseKind.COAST,
                brake_start - final_coast.duration,
                brake_start,
                holds[-1],
                u_brake,
            )
        )
    phases.append(Phase(PhaseKind.MAX_BRAKE, brake_start, horizon, u_brake, 0.0))

    for left, right in zip(phases, phases[1:]):
        if abs(left.t_end - right.t_start) > 10 * HOLD_SLACK or abs(
            left.v_end - right.v_start
        ) > 1e-9:
            raise AssertionError(
                f"discontinuity between phases {left} and {right}"
            )
    return SpeedProfile(phases=tuple(phases), grid=grid, train_index=train_index)


def build_profile(
    p: TrainParams,
    v_base: float,
    weights,
    grid,
    train_index: int = 0,
) -> SpeedProfile:
    """Profile of optimal type for base speed ``v_base`` and interval weights."""
    w = weights.w if hasattr(weights, "w") else tuple(weights)
    n_int = len(grid) - 1
    if len(w) != n_int:
        raise ValueError(f"need one weight per interval: {len(w)} vs {n_int}")
    holds = [constrained_speed(p, v_base, wk) for wk in w]
    return build_profile_from_hold_speeds(p, holds, grid, train_index)


def _phase_metrics(p: TrainParams, ph: Phase) -> PhaseMetrics:
    if ph.kind is PhaseKind.MAX_ACCEL:
        return accel_metrics(p, ph.v_start, ph.v_end)
    if ph.kind is PhaseKind.COAST:
        return coast_metrics(p, ph.v_start, ph.v_end)
    if ph.kind is PhaseKind.MAX_BRAKE:
        return brake_metrics(p, ph.v_start, ph.v_end)
    return hold_metrics(p, ph.v_start, ph.duration)


def _phase_power(p: TrainParams, ph: Phase) -> float:
    """Traction power of a phase; constant within every phase kind."""
    if ph.kind is PhaseKind.MAX_ACCEL:
        return p.traction_A
    if ph.kind is PhaseKind.SPEEDHOLD:
        return phi(p, ph.v_start)
    return 0.0


def evaluate_profile(p: TrainParams, profile: SpeedProfile) -> ProfileEvaluation:
    """Distance, per-interval energies (J per unit mass) and boundary speeds.

    Energies are split exactly at the grid times: traction power is A on
    acceleration phases and phi(V) on holds, so a phase contributes its
    overlap duration times that power to each interval it touches.
    """
    grid = profile.grid
    n_int = len(grid) - 1
    distance = 0.0
    energy = [0.0] * n_int
    for ph in profile.phases:
        distance += _phase_metrics(p, ph).distance
        power = _phase_power(p, ph)
        if power == 0.0:
            continue
        for k in range(n_int):
            overlap = min(ph.t_end, grid[k + 1]) - max(ph.t_start, grid[k])
            if overlap > 0:
                energy[k] += power * overlap
    transition_speeds = tuple(speed_at(p, profile, t) for t in grid[1:-1])
    braking = 0.0
    for ph in profile.phases:
        if ph.kind is PhaseKind.MAX_BRAKE:
            braking = ph.v_start
            break
    return ProfileEvaluation(
        total_distance=distance,
        interval_energy=tuple(energy),
        total_energy=sum(energy),
        transition_speeds=transition_speeds,
        braking_speed=braking,
    )


def speed_at(p: TrainParams, profile: SpeedProfile, t: float) -> float:
    """Speed at time t (phases are closed on the left)."""
    ph = profile.phase_at(t)
    tau = t - ph.t_start
    if ph.kind is PhaseKind.SPEEDHOLD:
        return ph.v_start
    if tau <= 0:
        return ph.v_start
    if tau >= ph.duration:
        return ph.v_end
    if ph.kind is PhaseKind.MAX_ACCEL:
        return accel_speed_after(p, ph.v_start, tau)
    if ph.kind is PhaseKind.COAST:
        return coast_speed_after(p, ph.v_start, tau)
    return brake_speed_after(p, ph.v_start, tau)


def sample_profile(p: TrainParams, profile: SpeedProfile, stride: float = 1.0):
    """Sample (t, v, x, phase, u_a, u_b) rows at the given time stride.

    The final time T is always included.  Positions accumulate the exact
    phase distances, so sampled x(T) matches the evaluated total distance.
    """
    times = [i * stride for i in range(int(math.floor(profile.horizon / stride)) + 1)]
    if times[-1] < profile.horizon - 1e-12:
        times.append(profile.horizon)
    phase_x = []
    x = 0.0
    for ph in profile.phases:
        phase_x.append(x)
        x += _phase_metrics(p, ph).distance

    rows = []
    pidx = 0
    for t in times:
        while pidx < len(profile.phases) - 1 and t >= profile.phases[pidx].t_end:
            pidx += 1
        ph = profile.phases[pidx]
        tau = min(max(t - ph.t_start, 0.0), ph.duration)
        if ph.kind is PhaseKind.SPEEDHOLD:
            v = ph.v_start
            dx = v * tau
            u_a, u_b = resistance(p, v), 0.0
        elif ph.kind is PhaseKind.MAX_ACCEL:
            v = accel_speed_after(p, ph.v_start, tau) if tau < ph.duration else ph.v_end
            dx = accel_metrics(p, ph.v_start, v).distance
            u_a, u_b = max_traction(p, max(v, 1e-3)), 0.0
        elif ph.kind is PhaseKind.COAST:
            v = coast_speed_after(p, ph.v_start, tau) if tau < ph.duration else ph.v_end
            dx = coast_metrics(p, ph.v_start, v).distance
            u_a, u_b = 0.0, 0.0
        else:
            v = brake_speed_after(p, ph.v_start, tau) if tau < ph.duration else ph.v_end
            dx = brake_metrics(p, ph.v_start, v).distance
            u_a, u_b = 0.0, p.brake_bound
        rows.append((t, v, phase_x[pidx] + dx, ph.kind.value, u_a, u_b))
    return rows


def energy_sensitivity_signs(
    p: TrainParams,
    v_base: float,
    weights,
    grid,
    k: int,
    rel_step: float = 1e-5,
) -> tuple:
    """Signs of dE_k/d(hold speed) for the holds of intervals k-1, k, k+1.

    The hold speeds are perturbed independently (central differences);
    lifting a neighbouring hold lowers the interval's energy while lifting
    its own hold raises it, giving (-1, +1, -1).
    """
    w = weights.w if hasattr(weights, "w") else tuple(weights)
    n_int = len(grid) - 1
    if not 1 <= k <= n_int - 2:
        raise ValueError(f"interval {k} has no interior neighbours (0..{n_int - 1})")
    holds = [constrained_speed(p, v_base, wk) for wk in w]

    def energy_k(hs):
        profile = build_profile_from_hold_speeds(p, hs, grid)
        return evaluate_profile(p, profile).interval_energy[k]

    signs = []
    for target in (k - 1, k, k + 1):
        h = rel_step * holds[target]
        hi = list(holds)
        lo = list(holds)
        hi[target] += h
        lo[target] -= h
        derivative = (energy_k(hi) - energy_k(lo)) / (2.0 * h)
        signs.append(int(math.copysign(1.0, derivative)))
    return tuple(signs)
