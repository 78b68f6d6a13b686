"""Plan with every constraint method at every sweep height and print the worst-case bound table.

usage: python3 scripts/bound_table.py [--config configs/desk.yaml] [--out results/bound_table] [--interval 0.01]
"""
import argparse
import os

from waiter.cli import bound_table, format_bound_table, plan_trajectory
from waiter.config import ScenarioConfig
from waiter.moments.verify import verify_trajectory


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--out", default="results/bound_table")
    ap.add_argument("--interval", type=float)
    args = ap.parse_args()
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    interval = args.interval or cfg.verify.interval
    os.makedirs(args.out, exist_ok=True)
    reports = []
    for h in cfg.sweep.heights:
        for method in cfg.sweep.methods:
            traj = plan_trajectory(cfg, h, method)
            tag = f"{method}_{round(100 * h)}cm"
            traj.save(os.path.join(args.out, tag + ".txt"))
            rep = verify_trajectory(traj, cfg.contact_set(cfg.contacts.mu_verify), cfg.shape(h), cfg.com_box(h),
                                    interval=interval, r=cfg.verify.order, prune=cfg.verify.prune)
            rep.write_csv(os.path.join(args.out, tag + "_verify.csv"))
            print(f"{tag:14s} {rep.summary()}", flush=True)
            reports.append(rep)
    print(format_bound_table(bound_table(reports)))


if __name__ == "__main__":
    main()
