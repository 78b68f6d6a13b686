"""Simulation sweep over heights x methods x goals x CoMs x inertia scales.

usage: python3 scripts/sweep.py [--config configs/desk.yaml] [--out results/sweep.csv]
"""
import sys

from waiter.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", *sys.argv[1:]]))
