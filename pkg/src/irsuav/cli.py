"""Command line front end: ``irsuav <subcommand> [options]``.

Every subcommand writes CSV files (header row, floats with 9 significant
digits) plus ``metadata.json`` into the ``--out`` directory.  Exit status is
0 on success, 2 when the minimum rates cannot be met and 1 on configuration
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import planner
from .channel import fading_period, los_gain_table
from .config import RunConfig, SolverConfig, load_config
from .errors import ConfigError, Infeasible, IrsUavError
from .fading_mc import outage_study
from .scenario import desk_scenario, straight_line

log = logging.getLogger("irsuav")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# --------------------------------------------------------------------------- #
# Emitters
# --------------------------------------------------------------------------- #

def write_trajectory(out: Path, positions: np.ndarray, name: str = "trajectory.csv") -> None:
    write_csv(out / name, ["n", "x", "y", "z"],
              ([n, *positions[n]] for n in range(positions.shape[0])))


def write_allocation(out: Path, sol: planner.Solution) -> None:
    alloc = sol.allocation
    kp = alloc.irs_user
    k, i, n = np.nonzero(alloc.u)
    order = np.lexsort((i, n))
    rows = ([int(n[j]), int(i[j]) + 1, int(k[j]), int(kp[n[j]]), alloc.p[k[j], i[j], n[j]]]
            for j in order)
    write_csv(out / "allocation.csv", ["n", "i", "k", "k_irs", "p_w"], rows)


def write_users(out: Path, sol: planner.Solution, r_min: np.ndarray) -> None:
    write_csv(out / "user_rates.csv", ["k", "rate", "r_min"],
              ([k, sol.per_user_rates[k], r_min[k]] for k in range(len(r_min))))


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #

def _planner_opts(args, cfg: RunConfig) -> planner.PlannerOptions:
    s = cfg.solver
    return planner.PlannerOptions(eps=s.eps, iter_max=s.iter_max,
                                  freeze_altitude=args.freeze_altitude or s.freeze_altitude,
                                  workers=args.workers)


def cmd_solve(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    sol = planner.alternate(sc, args.alpha, _planner_opts(args, cfg))
    write_trajectory(out, sol.trajectory.positions)
    write_allocation(out, sol)
    write_users(out, sol, sc.r_min)
    n_f = sc.ofdm.n_f
    write_csv(out / "rates.csv", ["iteration", "stage", "lb", "lb_aggregate"],
              ([j + 1, "ra" if j % 2 == 0 else "trajectory", v / n_f, v]
               for j, v in enumerate(sol.iteration_trace)))
    return {"lb_sum_rate": sol.normalized_sum_rate, "lb_sum_rate_aggregate": sol.lb_sum_rate,
            "iterations": len(sol.iteration_trace)}


def cmd_sweep_alpha(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    grid = args.grid if args.grid else planner.ALPHA_GRID
    solver = planner.exhaustive_rate if sc.uav.n_slots == 3 else planner._alternate_rate
    best, curve = planner.sweep_alpha(sc, grid, _planner_opts(args, cfg), solver)
    n_f = sc.ofdm.n_f
    write_csv(out / "rates.csv", ["alpha", "lb", "ub", "lb_aggregate", "ub_aggregate"],
              ([a, lb / n_f, ub / n_f, lb, ub] for a, lb, ub in curve))
    return {"alpha_star": best, "solver": "exhaustive" if sc.uav.n_slots == 3 else "alternate"}


def cmd_baselines(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    opts = _planner_opts(args, cfg)
    wanted = args.baseline or ["1", "2", "tdma"]
    rows, summary = [], {}
    schemes = [("proposed", planner.solve_proposed)] + [(f"baseline_{b}", planner.BASELINES[b])
                                                    for b in wanted]
    for name, fn in schemes:
        try:
            sol = fn(sc, args.alpha, opts)
            rows.append([name, sol.normalized_sum_rate, sol.lb_sum_rate, 1])
            write_trajectory(out, sol.trajectory.positions, f"trajectory_{name}.csv")
            summary[name] = sol.normalized_sum_rate
        except Infeasible:
            rows.append([name, float("nan"), float("nan"), 0])
            summary[name] = None
    write_csv(out / "rates.csv", ["scheme", "lb", "lb_aggregate", "feasible"], rows)
    if summary["proposed"] is None:
        raise Infeasible("the proposed scheme is infeasible")
    return {"schemes": summary}


def cmd_outage(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    runs = args.mc_runs if args.mc_runs is not None else cfg.solver.mc_runs
    sol, rep = outage_study(sc, args.alpha, cfg.solver.eta, runs, args.seed,
                            _planner_opts(args, cfg))
    write_trajectory(out, sol.trajectory.positions)
    write_csv(out / "outage.csv", ["run", "k", "outage_rate", "los_rate", "r_min"],
              ([r, k, rep.per_run_user_rates[r, k], rep.los_user_rates[k], sc.r_min[k]]
               for r in range(runs) for k in range(sc.n_users)))
    return {"eta": rep.eta, "mc_runs": runs, "avg_system_outage_rate": rep.avg_system_outage_rate,
            "los_sum_rate": rep.los_sum_rate}


def _service_area(sc) -> tuple[tuple[float, float], tuple[float, float]]:
    pts = np.vstack([sc.uav.q_initial, sc.uav.q_final] + [u.location for u in sc.users])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1]))


def cmd_place_irs(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    xr, yr = _service_area(sc)
    grid = planner.boundary_grid(xr, yr, args.spacing)
    best, rate_map = planner.irs_placement_search(sc, grid, args.alpha, _planner_opts(args, cfg))
    n_f = sc.ofdm.n_f
    write_csv(out / "placement.csv", ["x", "y", "lb", "lb_aggregate"],
              ([x, y, r / n_f, r] for x, y, r in rate_map))
    return {"best_location": best.tolist(), "candidates": len(rate_map)}


def cmd_channel_probe(args, cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    q = straight_line(sc.uav)
    gains = los_gain_table(q, sc.irs, list(sc.users), sc.ofdm)
    n_users, n_f, n_slots = sc.n_users, sc.ofdm.n_f, sc.uav.n_slots
    write_csv(out / "channel.csv", ["n", "i", "k", "k_irs", "gain"],
              ([n, i + 1, k, kp, gains[kp, k, i, n]]
               for n in range(n_slots) for kp in range(n_users) for k in range(n_users)
               for i in range(n_f)))
    write_csv(out / "periods.csv", ["n", "k", "period_subcarriers"],
              ([n, k, fading_period(k, q[n], sc.irs, list(sc.users), sc.ofdm.delta_f)]
               for n in range(n_slots) for k in range(n_users)))
    write_trajectory(out, q)
    return {"rows": n_slots * n_users * n_users * n_f}


COMMANDS = {
    "solve": cmd_solve,
    "sweep-alpha": cmd_sweep_alpha,
    "baselines": cmd_baselines,
    "outage": cmd_outage,
    "place-irs": cmd_place_irs,
    "channel-probe": cmd_channel_probe,
}


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="TOML scenario file (desk defaults if omitted)")
    common.add_argument("--alpha", type=float, help="approximation parameter in (0, 0.25)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--freeze-altitude", action="store_true",
                        help="keep the UAV at its minimum altitude")
    common.add_argument("--baseline", action="append", choices=sorted(planner.BASELINES),
                        help="baseline to run (repeatable; default all)")
    common.add_argument("--mc-runs", type=int, help="Monte Carlo runs for outage")
    common.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    common.add_argument("--spacing", type=float, default=50.0,
                        help="candidate spacing along the boundary for place-irs (m)")
    common.add_argument("--grid", type=float, nargs="+", help="alpha grid for sweep-alpha")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="irsuav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load(args) -> RunConfig:
    if args.scenario is None:
        cfg = RunConfig(desk_scenario(), SolverConfig())
    else:
        cfg = load_config(args.scenario)
    solver = cfg.solver
    if args.seed is not None:
        solver = replace(solver, seed=args.seed)
    if args.alpha is not None:
        if not 0.0 < args.alpha < 0.25:
            raise ConfigError("--alpha", "must lie in (0, 0.25)")
        solver = replace(solver, alpha=args.alpha)
    if args.mc_runs is not None and args.mc_runs < 1:
        raise ConfigError("--mc-runs", "must be positive")
    return replace(cfg, solver=solver)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.alpha, args.seed = cfg.solver.alpha, cfg.solver.seed
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, info = EXIT_OK, {}
    try:
        info = COMMANDS[args.command](args, cfg, out)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        status, info = EXIT_INFEASIBLE, {"error": str(exc)}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IrsUavError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"command": args.command, "scenario": str(args.scenario) if args.scenario else "desk",
            "seed": args.seed, "alpha": args.alpha, "git_describe": _git_describe(),
            "wall_time_s": round(time.perf_counter() - t0, 3), "exit_code": status, **info}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, default=float) + "\n")
    if status == EXIT_OK:
        print(json.dumps({k: v for k, v in meta.items() if k != "git_describe"}, default=float))
    return status


if __name__ == "__main__":
    raise SystemExit(main())
