"""Coupled solve for fleet driving speeds under interval energy caps.

Unknowns are one base cruise speed per train plus one weight per capped
interval that currently binds; residuals are the per-train distance
constraints and the fleet energy constraints on the binding intervals.
The weights are shared across the fleet, which is what couples otherwise
independent journeys.  An active-set loop adds the most-violated cap and
drops caps whose weight falls to zero; each inner system is solved by a
damped Newton iteration with a forward-difference Jacobian, falling back
to a dog-leg trust-region solve if Newton stalls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, root

from .adjoint_switching import IntervalWeights
from .errors import FleetDriveError, Infeasible, NonConvergence
from .strategy_profile import (
    ProfileEvaluation,
    SpeedProfile,
    build_profile,
    evaluate_profile,
)
from .train_model import TrainParams, speed_cap

FD_STEP = 1e-6
MAX_HALVINGS = 30


@dataclass(frozen=True)
class FleetProblem:
    """Fleet journeys on a common time grid with optional interval caps.

    ``trains`` pairs each train's parameters with its journey distance;
    ``caps`` holds one entry per grid interval, ``None`` where unlimited.
    Caps and all reported energies are mass-scaled joules.
    """

    trains: tuple
    horizon: float
    grid: tuple
    caps: tuple = ()

    def __post_init__(self):
        trains = tuple((p, float(x)) for p, x in self.trains)
        grid = tuple(float(t) for t in self.grid)
        n_int = len(grid) - 1
        caps = tuple(self.caps) if self.caps else (None,) * n_int
        caps = tuple(None if q is None else float(q) for q in caps)
        if not trains:
            raise ValueError("at least one train required")
        for p, x in trains:
            if not isinstance(p, TrainParams):
                raise TypeError(f"expected TrainParams, got {type(p)!r}")
            if x <= 0:
                raise ValueError(f"journey distance must be > 0, got {x}")
        if len(grid) < 2 or any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError(f"grid must be strictly increasing, got {grid}")
        if grid[0] != 0.0:
            raise ValueError("grid must start at t=0")
        if grid[-1] != float(self.horizon):
            raise ValueError(
                f"grid must end at the horizon: {grid[-1]} != {self.horizon}"
            )
        if len(caps) != n_int:
            raise ValueError(f"need one cap entry per interval: {len(caps)} vs {n_int}")
        if any(q is not None and q < 0 for q in caps):
            raise ValueError("caps must be >= 0 where present")
        object.__setattr__(self, "trains", trains)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_trains(self) -> int:
        return len(self.trains)

    @property
    def n_intervals(self) -> int:
        return len(self.grid) - 1

    @property
    def capped_intervals(self) -> tuple:
        return tuple(k for k, q in enumerate(self.caps) if q is not None)


@dataclass(frozen=True)
class FleetSolution:
    """Solved fleet strategy with per-train profiles and diagnostics."""

    problem: FleetProblem
    v_base: tuple
    weights: IntervalWeights
    profiles: tuple
    evaluations: tuple
    costs: tuple
    total_cost: float
    fleet_interval_energy: tuple
    residuals: tuple
    residual_norm: float
    iterations: tuple = ()
    notes: tuple = ()

    @property
    def active_set(self) -> tuple:
        return self.weights.active_set


def _fleet_state(problem: FleetProblem, v_base, w):
    """Profiles and evaluations for every train at the given point."""
    profiles = []
    evals = []
    for j, (p, _x) in enumerate(problem.trains):
        profile = build_profile(p, v_base[j], w, problem.grid, train_index=j)
        profiles.append(profile)
        evals.append(evaluate_profile(p, profile))
    return tuple(profiles), tuple(evals)


def _fleet_energies(problem: FleetProblem, evals) -> np.ndarray:
    """Mass-scaled fleet energy per interval."""
    energies = np.zeros(problem.n_intervals)
    for (p, _x), ev in zip(problem.trains, evals):
        energies += p.mass * np.asarray(ev.interval_energy)
    return energies


def _residual_vector(problem: FleetProblem, v_base, w, active) -> np.ndarray:
    _profiles, evals = _fleet_state(problem, v_base, w)
    out = [ev.total_distance - x for ev, (_p, x) in zip(evals, problem.trains)]
    if active:
        energies = _fleet_energies(problem, evals)
        out.extend(energies[k] - problem.caps[k] for k in active)
    return np.asarray(out)


def residuals(problem: FleetProblem, v_base, weights) -> np.ndarray:
    """Distance residuals for each train followed by the energy residuals
    of every capped interval with a positive weight."""
    w = weights.w if hasattr(weights, "w") else tuple(weights)
    active = tuple(k for k in problem.capped_intervals if w[k] > 0)
    return _residual_vector(problem, v_base, w, active)


def _unconstrained_speed(p: TrainParams, x_target: float, grid) -> float:
    """Base speed covering x_target with no caps (scalar bracketed solve)."""
    n_int = len(grid) - 1
    zeros = (0.0,) * n_int

    def distance(v):
        profile = build_profile(p, v, zeros, grid)
        return evaluate_profile(p, profile).total_distance

    hi = 0.999 * speed_cap(p)
    for _ in range(60):
        try:
            d_hi = distance(hi)
            break
        except FleetDriveError:
            hi *= 0.95
    else:
        raise Infeasible("no feasible cruise speed for the journey time")
    if d_hi < x_target:
        raise Infeasible(
            f"journey of {x_target} m unreachable in the horizon: even at the "
            f"speed cap only {d_hi:.1f} m are covered"
        )
    lo = min(1.0, 0.5 * hi)
    while distance(lo) > x_target:
        lo *= 0.5
        if lo < 1e-6:
            raise Infeasible(f"journey distance {x_target} m is too short")
    return brentq(lambda v: distance(v) - x_target, lo, hi, xtol=1e-10)


class _Evaluator:
    """Residual evaluation with pack/unpack of the (V, w_active) vector."""

    def __init__(self, problem: FleetProblem, active):
        self.problem = problem
        self.active = tuple(active)
        self.m = problem.n_trains

    def unpack(self, x):
        v_base = tuple(x[: self.m])
        w = [0.0] * self.problem.n_intervals
        for i, k in enumerate(self.active):
            w[k] = x[self.m + i]
        return v_base, tuple(w)

    def residual(self, x) -> np.ndarray:
        v_base, w = self.unpack(x)
        if any(wk <= -0.9 for wk in w):
            raise FleetDriveError("weight left the plausible range")
        return _residual_vector(self.problem, v_base, w, self.active)

    def tolerances(self, tol_x, tol_e) -> np.ndarray:
        tols = [tol_x] * self.m
        tols.extend(tol_e[k] for k in self.active)
        return np.asarray(tols)


def _fd_jacobian(ev: _Evaluator, x, f0):
    n = len(x)
    jac = np.zeros((len(f0), n))
    for i in range(n):
        h = FD_STEP * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        try:
            fp = ev.residual(xp)
            jac[:, i] = (fp - f0) / h
            continue
        except (FleetDriveError, ValueError):
            pass
        xm = x.copy()
        xm[i] -= h
        fm = ev.residual(xm)
        jac[:, i] = (f0 - fm) / h
    return jac


def _damped_newton(ev: _Evaluator, x0, tols, max_iter):
    """Newton iteration with step halving; returns (x, f, converged, iters)."""
    x = np.asarray(x0, dtype=float)
    f = ev.residual(x)
    best = (np.linalg.norm(f), x.copy(), f.copy())
    for it in range(1, max_iter + 1):
        if np.all(np.abs(f) <= tols):
            # one full polishing step tightens residuals well below the
            # stopping tolerances when it succeeds
            try:
                jac = _fd_jacobian(ev, x, f)
                step = np.linalg.solve(jac, -f)
                f_new = ev.residual(x + step)
                if np.linalg.norm(f_new) < np.linalg.norm(f):
                    x, f = x + step, f_new
            except (FleetDriveError, ValueError, np.linalg.LinAlgError):
                pass
            return x, f, True, it
        jac = _fd_jacobian(ev, x, f)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        norm0 = np.linalg.norm(f)
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            try:
                f_new = ev.residual(x + alpha * step)
            except (FleetDriveError, ValueError):
                alpha *= 0.5
                continue
            if np.linalg.norm(f_new) < norm0:
                break
            alpha *= 0.5
        else:
            return best[1], best[2], False, it
        x = x + alpha * step
        f = f_new
        if np.linalg.norm(f) < best[0]:
            best = (np.linalg.norm(f), x.copy(), f.copy())
    converged = bool(np.all(np.abs(f) <= tols))
    return x, f, converged, max_iter


def _dogleg_fallback(ev: _Evaluator, x0, tols):
    """Powell hybrid (dog-leg trust region) attempt for stalled systems."""
    dim = len(x0)
    huge = np.full(dim, 1e8)

    def wrapped(x):
        try:
            return ev.residual(x)
        except (FleetDriveError, ValueError):
            return huge

    sol = root(wrapped, x0, method="hybr", options={"xtol": 1e-12})
    f = wrapped(sol.x)
    return sol.x, f, bool(np.all(np.abs(f) <= tols))


def solve(
    problem: FleetProblem,
    tol_x: float = 1e-3,
    tol_e: float | None = None,
    max_outer: int = 50,
    max_newton: int = 40,
) -> FleetSolution:
    """Solve the fleet problem to KKT consistency.

    Starts from the per-train unconstrained optimum, then alternates adding
    the most-violated cap (weight seeded at 0.1) with joint Newton solves
    and dropping caps whose weight falls to zero.  Deterministic for a
    given problem.

    Raises
    ------
    Infeasible
        If some journey cannot fit the horizon at any speed.
    NonConvergence
        If tolerances are not met within ``max_outer`` rounds; the best
        iterate found is attached to the exception.
    """
    grid = problem.grid
    n_int = problem.n_intervals
    history = []
    notes = []

    v_base = [
        _unconstrained_speed(p, x, grid) for p, x in problem.trains
    ]
    w = [0.0] * n_int
    _profiles, evals = _fleet_state(problem, v_base, w)
    unconstrained_cost = float(
        sum(p.mass * ev.total_energy for (p, _x), ev in zip(problem.trains, evals))
    )
    history.append(
        {
            "event": "unconstrained",
            "active_set": (),
            "v_base": tuple(v_base),
            "residual_norm": 0.0,
        }
    )

    if tol_e is None:
        tol_e_map = {
            k: 1e-3 * (problem.caps[k] if problem.caps[k] > 0 else unconstrained_cost)
            for k in problem.capped_intervals
        }
    else:
        tol_e_map = {k: tol_e for k in problem.capped_intervals}

    active: list = []
    for outer in range(1, max_outer + 1):
        if active:
            ev = _Evaluator(problem, active)
            x0 = np.array(list(v_base) + [w[k] for k in active])
            tols = ev.tolerances(tol_x, tol_e_map)
            x, f, converged, iters = _damped_newton(ev, x0, tols, max_newton)
            if not converged:
                x, f, converged = _dogleg_fallback(ev, x, tols)
                history.append(
                    {
                        "event": "dogleg",
                        "active_set": tuple(active),
                        "residual_norm": float(np.linalg.norm(f)),
                    }
                )
            if not converged:
                raise NonConvergence(
                    f"inner solve stalled with active set {tuple(active)}; "
                    f"best residual norm {np.linalg.norm(f):.3e}",
                    best={"v_base": tuple(x[: problem.n_trains]), "active": tuple(active)},
                )
            v_base, w_full = ev.unpack(x)
            v_base = list(v_base)
            w = list(w_full)
            history.append(
                {
                    "event": "newton",
                    "active_set": tuple(active),
                    "newton_iters": iters,
                    "residual_norm": float(np.linalg.norm(f)),
                }
            )
            drops = [k for k in active if w[k] <= 0.0]
            if drops:
                for k in drops:
                    w[k] = 0.0
                    active.remove(k)
                history.append({"event": "drop", "active_set": tuple(active), "dropped": tuple(drops)})
                continue

        _profiles, evals = _fleet_state(problem, v_base, w)
        energies = _fleet_energies(problem, evals)
        violations = {
            k: energies[k] - problem.caps[k]
            for k in problem.capped_intervals
            if k not in active and energies[k] - problem.caps[k] > tol_e_map[k]
        }
        if not violations:
            break
        k_add = max(violations, key=violations.get)
        active.append(k_add)
        active.sort()
        w[k_add] = 0.1
        if k_add == 0:
            notes.append(
                "cap on interval 0 (contains the start from rest) is active; "
                "this configuration is supported but lightly exercised"
            )
        history.append(
            {
                "event": "add",
                "active_set": tuple(active),
                "added": k_add,
                "violation": float(violations[k_add]),
            }
        )
    else:
        raise NonConvergence(
            f"active set did not settle within {max_outer} outer iterations",
            best={"v_base": tuple(v_base), "active": tuple(active)},
        )

    profiles, evals = _fleet_state(problem, v_base, w)
    energies = _fleet_energies(problem, evals)
    costs = tuple(
        p.mass * ev.total_energy for (p, _x), ev in zip(problem.trains, evals)
    )
    res = _residual_vector(problem, v_base, w, tuple(active))
    return FleetSolution(
        problem=problem,
        v_base=tuple(v_base),
        weights=IntervalWeights(tuple(w)),
        profiles=profiles,
        evaluations=evals,
        costs=costs,
        total_cost=float(sum(costs)),
        fleet_interval_energy=tuple(energies),
        residuals=tuple(res),
        residual_norm=float(np.linalg.norm(res)),
        iterations=tuple(history),
        notes=tuple(notes),
    )


def incentive_breakeven(
    unconstrained: FleetSolution,
    constrained: FleetSolution,
    energy_price: float,
) -> float:
    """Minimum payment making the capped operation worthwhile.

    The extra energy bought by restricting the fleet is the difference of
    the two total costs; any incentive above that difference times the
    energy price leaves the operator ahead.
    """
    return (constrained.total_cost - unconstrained.total_cost) * energy_price
