"""Command-line entry point: ``waiter {plan,verify,simulate,sweep,report}``.

Exit codes
    0   success (verify: every bound <= 0; simulate: every case kept the object)
    1   verify found a positive bound / simulate saw at least one drop
    2   bad configuration or input file
    3   solver failure
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError, PenetrationBlowup, SolverFailure
from .moments.verify import VerificationReport, verify_trajectory
from .simulate import (SweepRow, read_sweep_csv, simulate_transport, success_table, sweep, sweep_objects,
                       tray_motion, write_sweep_csv)
from .trajopt import Trajectory, TrayState, solve_ocp

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    d = cfg.to_dict()
    if getattr(args, "iters", None) is not None:
        d["ocp"]["sqp_iters"] = args.iters
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "method", None):
        d["method"] = args.method
    if getattr(args, "height", None) is not None:
        d["object"]["height"] = args.height
    if getattr(args, "goal", None) is not None:
        d["goal_index"] = args.goal
    if getattr(args, "interval", None) is not None:
        d["verify"]["interval"] = args.interval
    return ScenarioConfig.from_dict(d)


def plan_trajectory(cfg: ScenarioConfig, height=None, method=None, goal_index=None) -> Trajectory:
    h = cfg.object.height if height is None else height
    method = cfg.method if method is None else method
    gi = cfg.goal_index if goal_index is None else goal_index
    ocp = cfg.ocp_config(h, method, cfg.goals[gi])
    traj = solve_ocp(ocp, TrayState.at_rest())
    return traj.with_meta(method=method, height=h, goal=gi)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ----------------------------------------------------------------------------- commands

def cmd_plan(args):
    cfg = _load_config(args)
    np.random.seed(cfg.seed)
    out = args.out or "trajectory.txt"
    try:
        traj = plan_trajectory(cfg)
        code = EXIT_OK
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        traj = exc.partial
        code = EXIT_SOLVER
        if traj is None:
            return code
        traj = traj.with_meta(method=cfg.method, height=cfg.object.height, goal=cfg.goal_index)
    traj.save(out)
    stats = {**traj.stats, "N": traj.N, "dt": traj.dt, "n_params": len(cfg.ocp_config().params),
             "final_position": traj.states[-1, :3], "dynamics_residual": traj.dynamics_residual(), **traj.meta}
    with open(out + ".stats.json", "w") as f:
        json.dump(_jsonable(stats), f, indent=1)
    print(f"plan method={cfg.method} height={cfg.object.height:g} goal={cfg.goal_index} N={traj.N} "
          f"status={traj.stats.get('status')} time={traj.stats.get('time', 0):.2f}s -> {out}")
    return code


def _verify_one(cfg: ScenarioConfig, traj: Trajectory, exhaustive):
    h = float(traj.meta.get("height", cfg.object.height))
    return verify_trajectory(traj, cfg.contact_set(cfg.contacts.mu_verify), cfg.shape(h), cfg.com_box(h),
                             interval=cfg.verify.interval, r=cfg.verify.order,
                             prune=cfg.verify.prune and not exhaustive)


def _out_paths(out, paths, suffix, default):
    if len(paths) == 1:
        return [out or default]
    d = out or "."
    os.makedirs(d, exist_ok=True)
    return [os.path.join(d, os.path.splitext(os.path.basename(p))[0] + suffix) for p in paths]


def bound_table(reports):
    """Rows of (method, {height: max bound}) from labelled reports."""
    table = {}
    for rep in reports:
        m = str(rep.meta.get("method", "?"))
        h = rep.meta.get("height", float("nan"))
        table.setdefault(m, {})[float(h)] = rep.max_bound
    return table


def format_bound_table(table):
    heights = sorted({h for row in table.values() for h in row})
    lines = ["method  " + "".join(f"{100 * h:>10.0f}cm" for h in heights)]
    for m in sorted(table):
        lines.append(f"{m:8s}" + "".join(f"{table[m].get(h, float('nan')):>12.4g}" for h in heights))
    return "\n".join(lines)


def cmd_verify(args):
    cfg = _load_config(args)
    outs = _out_paths(args.out, args.trajectories, "_verify.csv", "verification.csv")
    reports = []
    for path, out in zip(args.trajectories, outs):
        try:
            traj = Trajectory.load(path)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read trajectory {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            rep = _verify_one(cfg, traj, args.exhaustive)
        except SolverFailure as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        rep.write_csv(out)
        print(f"{path}: {rep.summary()}")
        reports.append(rep)
    if len(reports) > 1:
        print(format_bound_table(bound_table(reports)))
    return EXIT_OK if all(r.verified for r in reports) else EXIT_VIOLATION


def cmd_simulate(args):
    cfg = _load_config(args)
    rows = []
    for path in args.trajectories:
        try:
            traj = Trajectory.load(path)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read trajectory {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        h = float(traj.meta.get("height", cfg.object.height))
        method = str(traj.meta.get("method", cfg.method))
        gi = int(traj.meta.get("goal", cfg.goal_index))
        tray = tray_motion(traj, cfg.simulate.dt)
        objs = sweep_objects(cfg.dims(h), cfg.com_box(h), cfg.simulate.inertia_scales, cfg.contacts.mu_sim)
        for ci, s, obj in objs:
            try:
                res = simulate_transport(traj, obj, cfg.simulate.dt, tray=tray)
                rows.append(SweepRow(method, h, gi, ci, s, res.success, res.max_displacement))
            except PenetrationBlowup as exc:
                print(f"warning: com={ci} scale={s}: {exc}", file=sys.stderr)
                rows.append(SweepRow(method, h, gi, ci, s, False, float("nan")))
        sel = rows[-len(objs):]
        worst = np.nanmax([r.max_displacement for r in sel])
        print(f"{path}: {sum(r.success for r in sel)}/{len(sel)} succeeded, max displacement {1e3 * worst:.3f} mm")
    write_sweep_csv(rows, args.out or "simulation.csv")
    return EXIT_OK if all(r.success for r in rows) else EXIT_VIOLATION


def format_success_table(rows):
    tab = success_table(rows)
    heights = sorted({h for _, h in tab})
    methods = sorted({m for m, _ in tab})
    lines = ["method  " + "".join(f"{100 * h:>8.0f}cm" for h in heights)]
    for m in methods:
        lines.append(f"{m:8s}" + "".join(f"{100 * tab.get((m, h), float('nan')):>9.1f}%" for h in heights))
    return "\n".join(lines)


def cmd_sweep(args):
    cfg = _load_config(args)
    np.random.seed(cfg.seed)
    t0 = time.perf_counter()

    def plan_fn(h, method, goal):
        return solve_ocp(cfg.ocp_config(h, method, goal), TrayState.at_rest())

    log = (lambda s: print(s, flush=True)) if not args.quiet else None
    rows = sweep(cfg.sweep.heights, cfg.sweep.methods, cfg.goals, plan_fn, dims_fn=cfg.dims,
                 com_box_fn=cfg.com_box, scales=cfg.simulate.inertia_scales, mu_sim=cfg.contacts.mu_sim,
                 sim_dt=cfg.simulate.dt, log=log)
    write_sweep_csv(rows, args.out or "sweep.csv")
    print(format_success_table(rows))
    print(f"# sweep cases={len(rows)} wall={time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def cmd_report(args):
    reports, rows = [], []
    for path in args.files:
        try:
            with open(path) as f:
                head = [ln for ln in f if not ln.startswith("#")][:1]
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if head and head[0].startswith("t,row,bound"):
            rep = VerificationReport.read_csv(path)
            reports.append(rep)
            t, i = rep.argmax
            print(f"{path}: max_bound={rep.max_bound:.6g} at t={t:.3f} row={i} "
                  f"verified={'yes' if rep.verified else 'no'}")
        elif head and head[0].startswith("method,height"):
            rows += read_sweep_csv(path)
        else:
            print(f"error: {path} is neither a verification nor a sweep CSV", file=sys.stderr)
            return EXIT_CONFIG
    if reports:
        print(format_bound_table(bound_table(reports)))
    if rows:
        print(format_success_table(rows))
        d = [r.max_displacement for r in rows if r.success]
        if d:
            print(f"max displacement over successful runs: {1e3 * max(d):.3f} mm")
    return EXIT_OK


# ----------------------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML (defaults to the built-in desk scenario)")
    common.add_argument("--out", help="output file (or directory for batches)")
    common.add_argument("--seed", type=int, help="override the config seed")

    p = argparse.ArgumentParser(prog="waiter", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", parents=[common], help="plan a tray trajectory")
    sp.add_argument("--iters", type=int, help="number of SQP iterations")
    sp.add_argument("--method", choices=("center", "top", "robust"))
    sp.add_argument("--height", type=float, help="object height (m)")
    sp.add_argument("--goal", type=int, help="index into the config's goal list")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("verify", parents=[common], help="bound sticking violations over all realizable objects")
    sp.add_argument("trajectories", nargs="+")
    sp.add_argument("--interval", type=float, help="resampling interval in seconds (default 0.01)")
    sp.add_argument("--exhaustive", action="store_true", help="solve every row at full order (no pruning)")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", parents=[common], help="simulate the CoM/inertia cases along trajectories")
    sp.add_argument("trajectories", nargs="+")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", parents=[common], help="plan and simulate over heights, methods and goals")
    sp.add_argument("--iters", type=int, help="number of SQP iterations")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="summarise verification and sweep CSVs")
    sp.add_argument("files", nargs="+")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
