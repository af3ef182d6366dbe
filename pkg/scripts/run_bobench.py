#!/usr/bin/env python3
"""Bayesian optimization benchmark comparing Seq, C-BE and D-BE acquisition optimization.

    python3 scripts/run_bobench.py --out-dir out/bobench --workers 4 [--paper-scale]
"""
import sys

from msoqn.cli import main

if __name__ == "__main__":
    sys.exit(main(["bobench", *sys.argv[1:]]))
