"""Problem-file ingestion, solver invocation and result emission.

Problem files are JSON documents::

    {
      "trains": [{"r0": 6.75e-3, "r2": 5e-5, "A": 3.0, "Hb": 0.3,
                  "mass": 1.0, "distance": 60000.0}],
      "horizon": 2400.0,
      "grid": [0.0, 750.0, 1350.0, 2400.0],
      "caps": [null, 400.0, null],
      "solver": {"tol_x": 1e-3, "tol_e": null, "max_iter": 50}
    }

``caps`` and ``solver`` are optional; unknown keys are rejected.  Results
are written as a JSON summary plus per-train CSV profiles; all tabular
output is plain CSV so any plotting tool can consume it.

Subcommands: ``solve``, ``sweep`` (re-solve over a list of caps for one
interval) and ``eta`` (adjoint-variable curves for one train).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .adjoint_switching import constrained_speed, eta
from .errors import FleetDriveError, Infeasible, NonConvergence
from .fleet_solver import FleetProblem, FleetSolution, solve
from .phase_kinematics import PhaseKind
from .sim_oracle import simulate, verify
from .strategy_profile import sample_profile
from .train_model import LEVEL_TRACK, TrainParams

_TRAIN_KEYS = {"r0", "r2", "A", "Hb", "mass", "distance"}
_TOP_KEYS = {"trains", "horizon", "grid", "caps", "solver"}
_SOLVER_KEYS = {"tol_x", "tol_e", "max_iter"}

DEFAULT_SOLVER_OPTIONS = {"tol_x": 1e-3, "tol_e": None, "max_iter": 50}


def _reject_unknown(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


def problem_from_dict(doc: dict):
    """Build (FleetProblem, solver options) from a parsed problem document."""
    if not isinstance(doc, dict):
        raise ValueError("problem document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "problem document")
    for key in ("trains", "horizon", "grid"):
        if key not in doc:
            raise ValueError(f"problem document lacks required key {key!r}")
    trains = []
    for i, entry in enumerate(doc["trains"]):
        _reject_unknown(entry, _TRAIN_KEYS, f"trains[{i}]")
        missing = {"r0", "r2", "A", "Hb", "distance"} - set(entry)
        if missing:
            raise ValueError(f"trains[{i}] lacks keys {sorted(missing)}")
        params = TrainParams(
            r0=float(entry["r0"]),
            r2=float(entry["r2"]),
            traction_A=float(entry["A"]),
            brake_bound=float(entry["Hb"]),
            mass=float(entry.get("mass", 1.0)),
        )
        trains.append((params, float(entry["distance"])))
    caps = doc.get("caps")
    problem = FleetProblem(
        trains=tuple(trains),
        horizon=float(doc["horizon"]),
        grid=tuple(float(t) for t in doc["grid"]),
        caps=tuple(caps) if caps is not None else (),
    )
    options = dict(DEFAULT_SOLVER_OPTIONS)
    if "solver" in doc:
        _reject_unknown(doc["solver"], _SOLVER_KEYS, "solver")
        options.update(doc["solver"])
    return problem, options


def problem_to_dict(problem: FleetProblem, options: dict | None = None) -> dict:
    """Serialize a problem (and solver options) back to the file format."""
    doc = {
        "trains": [
            {
                "r0": p.r0,
                "r2": p.r2,
                "A": p.traction_A,
                "Hb": p.brake_bound,
                "mass": p.mass,
                "distance": x,
            }
            for p, x in problem.trains
        ],
        "horizon": problem.horizon,
        "grid": list(problem.grid),
        "caps": list(problem.caps),
    }
    if options is not None:
        doc["solver"] = dict(options)
    return doc


def load_problem(path):
    """Read and validate a problem file."""
    with open(path) as fh:
        doc = json.load(fh)
    return problem_from_dict(doc)


def _solve_with_options(problem: FleetProblem, options: dict) -> FleetSolution:
    return solve(
        problem,
        tol_x=options["tol_x"],
        tol_e=options["tol_e"],
        max_outer=options["max_iter"],
    )


def solution_summary(solution: FleetSolution) -> dict:
    """Summary document mirroring the per-train table layout."""
    problem = solution.problem
    per_train = []
    for j, ((p, x), ev) in enumerate(zip(problem.trains, solution.evaluations)):
        holds = [
            constrained_speed(p, solution.v_base[j], wk) for wk in solution.weights.w
        ]
        per_train.append(
            {
                "train": j,
                "distance_target": x,
                "distance": ev.total_distance,
                "cruise_speed": solution.v_base[j],
                "hold_speeds": holds,
                "boundary_speeds": list(ev.transition_speeds),
                "braking_speed": ev.braking_speed,
                "cost_per_mass": ev.total_energy,
                "cost": p.mass * ev.total_energy,
                "interval_energy_per_mass": list(ev.interval_energy),
                "interval_energy": [p.mass * e for e in ev.interval_energy],
            }
        )
    return {
        "weights": list(solution.weights.w),
        "active_set": list(solution.active_set),
        "caps": list(problem.caps),
        "fleet_interval_energy": list(solution.fleet_interval_energy),
        "total_cost": solution.total_cost,
        "residual_norm": solution.residual_norm,
        "trains": per_train,
        "notes": list(solution.notes),
    }


def _print_summary(solution: FleetSolution, stream=sys.stdout):
    problem = solution.problem
    w = ", ".join(f"w[{k}]={solution.weights[k]:.6f}" for k in solution.active_set)
    print(f"active caps: {list(solution.active_set)}  {w}", file=stream)
    header = f"{'train':>5} {'V':>8} {'U':>8} {'J':>12} " + " ".join(
        f"{'E[%d]' % k:>10}" for k in range(problem.n_intervals)
    )
    print(header, file=stream)
    for j, ev in enumerate(solution.evaluations):
        mass = problem.trains[j][0].mass
        row = (
            f"{j:>5} {solution.v_base[j]:8.3f} {ev.braking_speed:8.3f} "
            f"{mass * ev.total_energy:12.2f} "
            + " ".join(f"{mass * e:10.2f}" for e in ev.interval_energy)
        )
        print(row, file=stream)
    print(f"total cost: {solution.total_cost:.2f}", file=stream)


def _write_profile_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v", "x", "phase", "u_a", "u_b"])
        for t, v, x, phase, u_a, u_b in rows:
            writer.writerow([f"{t:.6f}", f"{v:.9f}", f"{x:.6f}", phase, f"{u_a:.9f}", f"{u_b:.9f}"])


def _write_sim_csv(path, sim):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "v", "x", "u_a", "u_b"])
        for t, v, x, u_a, u_b in zip(sim.t, sim.v, sim.x, sim.u_a, sim.u_b):
            writer.writerow([f"{t:.6f}", f"{v:.9f}", f"{x:.6f}", f"{u_a:.9f}", f"{u_b:.9f}"])


def cmd_solve(args) -> int:
    problem, options = load_problem(args.problem)
    if args.tol_x is not None:
        options["tol_x"] = args.tol_x
    if args.tol_e is not None:
        options["tol_e"] = args.tol_e
    if args.max_iter is not None:
        options["max_iter"] = args.max_iter
    out = Path(args.out) if args.out else Path(Path(args.problem).stem + "_out")
    out.mkdir(parents=True, exist_ok=True)

    solution = _solve_with_options(problem, options)
    summary = solution_summary(solution)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    for j, profile in enumerate(solution.profiles):
        p = problem.trains[j][0]
        rows = sample_profile(p, profile, stride=args.stride)
        _write_profile_csv(out / f"profile_train{j}.csv", rows)
    _print_summary(solution)

    if args.simulate:
        breached = False
        for j, profile in enumerate(solution.profiles):
            p = problem.trains[j][0]
            sim = simulate(p, LEVEL_TRACK, profile, dt=args.sim_dt)
            _write_sim_csv(out / f"sim_train{j}.csv", sim)
            report = verify(profile, solution.evaluations[j], sim)
            status = "ok" if report.passed else "BREACH"
            print(f"simulate train {j}: {status}")
            for item in report.items:
                flag = "" if item.ok else "  <-- exceeds tolerance"
                print(
                    f"    {item.name}: analytic {item.expected:.4f} "
                    f"simulated {item.actual:.4f} delta {item.delta:+.5f}{flag}"
                )
            breached = breached or not report.passed
        if breached:
            print("simulation verification failed", file=sys.stderr)
            return 4
    return 0


def cmd_sweep(args) -> int:
    problem, options = load_problem(args.problem)
    k = args.interval
    if not 0 <= k < problem.n_intervals:
        raise ValueError(
            f"interval {k} out of range 0..{problem.n_intervals - 1}"
        )
    caps = [float(c) for c in args.caps.split(",")]
    out = Path(args.out) if args.out else Path(Path(args.problem).stem + "_sweep")
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for q in caps:
        new_caps = list(problem.caps)
        new_caps[k] = q
        capped = FleetProblem(
            trains=problem.trains,
            horizon=problem.horizon,
            grid=problem.grid,
            caps=tuple(new_caps),
        )
        try:
            solution = _solve_with_options(capped, options)
        except FleetDriveError as exc:
            rows.append({"cap": q, "status": f"failed: {exc}"})
            continue
        entry = {"cap": q, "status": "ok", "weight": solution.weights[k]}
        for j, ev in enumerate(solution.evaluations):
            p = problem.trains[j][0]
            holds = constrained_speed(p, solution.v_base[j], solution.weights[k])
            entry[f"J_{j}"] = p.mass * ev.total_energy
            entry[f"V_{j}"] = solution.v_base[j]
            entry[f"W{k}_{j}"] = ev.transition_speeds[k - 1] if k >= 1 else float("nan")
            entry[f"Vk_{j}"] = holds
            entry[f"W{k + 1}_{j}"] = (
                ev.transition_speeds[k]
                if k < len(ev.transition_speeds)
                else float("nan")
            )
            entry[f"U_{j}"] = ev.braking_speed
            rows_profile = sample_profile(p, solution.profiles[j], stride=args.stride)
            _write_profile_csv(out / f"profile_q{q:g}_train{j}.csv", rows_profile)
        rows.append(entry)

    fields = sorted({key for row in rows for key in row}, key=str)
    fields.remove("cap")
    fields.insert(0, "cap")
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out / 'sweep.csv'} with {len(rows)} rows")
    return 0


def cmd_eta(args) -> int:
    problem, options = load_problem(args.problem)
    solution = _solve_with_options(problem, options)
    j = args.train
    if not 0 <= j < problem.n_trains:
        raise ValueError(f"train {j} out of range 0..{problem.n_trains - 1}")
    p = problem.trains[j][0]
    profile = solution.profiles[j]
    grid = problem.grid
    out = Path(args.out) if args.out else Path(Path(args.problem).stem + "_eta")
    out.mkdir(parents=True, exist_ok=True)

    holds = [constrained_speed(p, solution.v_base[j], wk) for wk in solution.weights.w]
    path = out / f"eta_train{j}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "kind", "interval", "v", "eta", "marker"])
        for seg, ph in enumerate(profile.phases):
            if ph.kind is PhaseKind.MAX_BRAKE:
                continue
            mid = 0.5 * (ph.t_start + ph.t_end)
            k = min(
                max(sum(1 for t in grid[1:-1] if t <= mid), 0), len(grid) - 2
            )
            v_hold, wk = holds[k], solution.weights[k]
            if ph.kind is PhaseKind.SPEEDHOLD:
                writer.writerow(
                    [seg, ph.kind.value, k, f"{ph.v_start:.9f}",
                     f"{1.0 + wk:.12f}", "turning_point"]
                )
                continue
            lo = max(min(ph.v_start, ph.v_end), 1e-3)
            hi = max(ph.v_start, ph.v_end)
            for i in range(args.samples + 1):
                v = lo + (hi - lo) * i / args.samples
                val = eta(p, ph.kind, v, v_hold, wk)
                writer.writerow([seg, ph.kind.value, k, f"{v:.9f}", f"{val:.12f}", ""])
            writer.writerow(
                [seg, ph.kind.value, k, f"{v_hold:.9f}", f"{1.0 + wk:.12f}",
                 "turning_point"]
            )
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetdrive",
        description="Energy-optimal fleet driving strategies under interval caps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve one problem file")
    ps.add_argument("problem", help="problem JSON file")
    ps.add_argument("-o", "--out", help="output directory")
    ps.add_argument("--simulate", action="store_true", help="verify with the ODE simulator")
    ps.add_argument("--sim-dt", type=float, default=0.01, help="simulator step (s)")
    ps.add_argument("--stride", type=float, default=1.0, help="profile CSV stride (s)")
    ps.add_argument("--tol-x", type=float, default=None, help="distance tolerance (m)")
    ps.add_argument("--tol-e", type=float, default=None, help="energy tolerance (J)")
    ps.add_argument("--max-iter", type=int, default=None, help="max outer iterations")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="re-solve over a list of caps for one interval")
    pw.add_argument("problem")
    pw.add_argument("--interval", type=int, required=True, help="interval index")
    pw.add_argument("--caps", required=True, help="comma-separated cap values (J)")
    pw.add_argument("-o", "--out", help="output directory")
    pw.add_argument("--stride", type=float, default=1.0)
    pw.set_defaults(func=cmd_sweep)

    pe = sub.add_parser("eta", help="emit adjoint-variable curves for one train")
    pe.add_argument("problem")
    pe.add_argument("--train", type=int, default=0)
    pe.add_argument("--samples", type=int, default=200)
    pe.add_argument("-o", "--out", help="output directory")
    pe.set_defaults(func=cmd_eta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"problem infeasible: {exc}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
