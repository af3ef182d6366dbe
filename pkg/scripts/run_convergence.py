#!/usr/bin/env python3
"""Convergence of coupled-batched L-BFGS-B on Rosenbrock as the number of restarts B grows.

    python3 scripts/run_convergence.py --out-dir out/convergence [--paper-scale]
"""
import sys

from msoqn.cli import main

if __name__ == "__main__":
    sys.exit(main(["convergence", *sys.argv[1:]]))
