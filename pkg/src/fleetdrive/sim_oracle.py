"""Forward ODE re-execution of an emitted speed profile.

Integrates x' = v, v' = u_a - u_b - r(v) + g(x) with fixed-step RK4,
reconstructing the controls from the phase schedule itself (not from
feedback), so it verifies the plan that was actually emitted.  The energy
integral u_a * v is accumulated by the trapezoidal rule at step ends and
binned per grid interval.  None of the closed forms or quadratures used
by the analytic evaluation are reused here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ControlInfeasible
from .phase_kinematics import PhaseKind
from .strategy_profile import SpeedProfile
from .train_model import LEVEL_TRACK, TrackProfile, TrainParams, max_traction, resistance

#: Traction clip floor for u_a = A/v at the start from rest.
V_CLIP = 1e-3


@dataclass(frozen=True)
class SimResult:
    """Trajectory samples and integral quantities of one simulation."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    u_a: np.ndarray
    u_b: np.ndarray
    distance: float
    interval_energy: tuple
    terminal_speed: float


@dataclass(frozen=True)
class VerifyItem:
    name: str
    expected: float
    actual: float
    tol: float

    @property
    def delta(self) -> float:
        return self.actual - self.expected

    @property
    def ok(self) -> bool:
        return abs(self.delta) <= self.tol


@dataclass(frozen=True)
class VerifyReport:
    items: tuple

    @property
    def passed(self) -> bool:
        return all(item.ok for item in self.items)

    def failures(self) -> tuple:
        return tuple(item for item in self.items if not item.ok)


def _controls(p: TrainParams, track: TrackProfile, phase, x: float, v: float):
    if phase.kind is PhaseKind.MAX_ACCEL:
        return p.traction_A / max(v, V_CLIP), 0.0
    if phase.kind is PhaseKind.SPEEDHOLD:
        u_a = resistance(p, phase.v_start) - track.gradient(x)
        if u_a < -1e-12 or (v > 0 and u_a > max_traction(p, v) + 1e-12):
            raise ControlInfeasible(
                f"speedhold at {phase.v_start:.3f} m/s needs u_a = {u_a:.4f} "
                f"outside [0, H_a] at x = {x:.1f} m"
            )
        return max(u_a, 0.0), 0.0
    if phase.kind is PhaseKind.MAX_BRAKE:
        return 0.0, p.brake_bound
    return 0.0, 0.0


def simulate(
    p: TrainParams,
    track: TrackProfile,
    profile: SpeedProfile,
    dt: float = 0.01,
    output_stride: float | None = 1.0,
) -> SimResult:
    """Re-integrate a profile with RK4 at step ``dt``.

    Steps are aligned to phase boundaries, grid times and output stride
    marks.  During the initial acceleration the step is refined while the
    speed is small (the traction A/v is stiff near rest); the refinement
    keeps the segment end times exact.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    grid = profile.grid
    horizon = profile.horizon
    n_int = len(grid) - 1

    marks = {ph.t_start for ph in profile.phases} | {ph.t_end for ph in profile.phases}
    marks |= set(grid)
    if output_stride:
        n_marks = int(math.floor(horizon / output_stride)) + 1
        marks |= {i * output_stride for i in range(n_marks)}
    breaks = sorted(m for m in marks if 0.0 <= m <= horizon)

    sample_t, sample_x, sample_v, sample_ua, sample_ub = [], [], [], [], []
    energy = [0.0] * n_int
    phases = profile.phases
    t, x, v = 0.0, 0.0, phases[0].v_start
    pidx = 0

    def record(u_a, u_b):
        sample_t.append(t)
        sample_x.append(x)
        sample_v.append(v)
        sample_ua.append(u_a)
        sample_ub.append(u_b)

    for seg_start, seg_end in zip(breaks, breaks[1:]):
        while pidx < len(phases) - 1 and seg_start >= phases[pidx].t_end - 1e-12:
            pidx += 1
        phase = phases[pidx]
        braking = phase.kind is PhaseKind.MAX_BRAKE
        accel = phase.kind is PhaseKind.MAX_ACCEL
        bin_k = min(
            int(np.searchsorted(grid, 0.5 * (seg_start + seg_end), side="right")) - 1,
            n_int - 1,
        )
        u_a0, u_b0 = _controls(p, track, phase, x, v)
        if seg_start == 0.0 or not sample_t:
            record(u_a0, u_b0)
        elif output_stride and abs(seg_start / output_stride - round(seg_start / output_stride)) < 1e-9:
            record(u_a0, u_b0)

        n_steps = max(int(math.ceil((seg_end - seg_start) / dt)), 1)
        h_nominal = (seg_end - seg_start) / n_steps
        remaining = seg_end - seg_start
        level = track.is_level

        def rhs(xq, vq):
            u_a, u_b = _controls(p, track, phase, xq, vq)
            g = 0.0 if level else track.gradient(xq)
            return vq, u_a - u_b - resistance(p, vq) + g, u_a

        while remaining > 1e-13:
            h = min(h_nominal, remaining)
            if accel and v < 1.0:
                h = min(h, max(0.2 * max(v, V_CLIP) ** 2 / p.traction_A, 1e-7))
            p0 = _controls(p, track, phase, x, v)[0] * v
            k1x, k1v, _ = rhs(x, v)
            k2x, k2v, _ = rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v, _ = rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v, _ = rhs(x + h * k3x, v + h * k3v)
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if braking and v < 0.0:
                v = 0.0
            t += h
            remaining -= h
            p1 = _controls(p, track, phase, x, v)[0] * v
            energy[bin_k] += 0.5 * h * (p0 + p1)
        t = seg_end  # kill accumulated rounding in t

    u_a, u_b = _controls(p, track, phases[-1], x, v)
    record(u_a, u_b)
    return SimResult(
        t=np.asarray(sample_t),
        x=np.asarray(sample_x),
        v=np.asarray(sample_v),
        u_a=np.asarray(sample_ua),
        u_b=np.asarray(sample_ub),
        distance=x,
        interval_energy=tuple(energy),
        terminal_speed=v,
    )


def verify(
    profile: SpeedProfile,
    evaluation,
    sim: SimResult,
    tol_distance: float = 5.0,
    tol_energy: float = 3.0,
    tol_terminal: float = 0.05,
) -> VerifyReport:
    """Compare the analytic evaluation of a profile against a simulation."""
    items = [
        VerifyItem("distance", evaluation.total_distance, sim.distance, tol_distance)
    ]
    for k, (e_ana, e_sim) in enumerate(
        zip(evaluation.interval_energy, sim.interval_energy)
    ):
        items.append(VerifyItem(f"interval_energy[{k}]", e_ana, e_sim, tol_energy))
    items.append(VerifyItem("terminal_speed", 0.0, sim.terminal_speed, tol_terminal))
    return VerifyReport(items=tuple(items))
