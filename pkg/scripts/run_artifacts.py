#!/usr/bin/env python3
"""Inverse-Hessian artifact experiment; prints e_rel and off-diagonal mass per case.

    python3 scripts/run_artifacts.py --out-dir out/artifacts [--cases lbfgsb:3,bfgs:10]
"""
import json
import sys
from pathlib import Path

from msoqn.cli import build_parser, main, resolve_settings

if __name__ == "__main__":
    argv = ["artifacts", *sys.argv[1:]]
    code = main(argv)
    out = Path(resolve_settings("artifacts", build_parser().parse_args(argv))["out_dir"])
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"{'case':<28}{'e_rel seq':>12}{'e_rel cbe':>12}{'offdiag seq':>13}{'offdiag cbe':>13}")
    for run in manifest["runs"]:
        if run["status"] == "ok":
            print(f"{run['name']:<28}{run['e_rel_seq']:>12.4f}{run['e_rel_cbe']:>12.4f}"
                  f"{run['offdiag_ratio_seq']:>13.4f}{run['offdiag_ratio_cbe']:>13.4f}")
    sys.exit(code)
