"""Command-line front end: ``msoqn {artifacts,convergence,bobench}``.

Settings resolve as command defaults, then the ``--config`` file, then flags.
Every output file starts with a metadata header (config hash, seed, version),
and each command writes ``manifest.json`` listing its runs and their status.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from msoqn import __version__
from msoqn.bo import SUMMARY_COLUMNS, BoConfig, summarize
from msoqn.config import ConfigError, load_config, parse_bool, split_list
from msoqn.diagnostics import write_matrix_csv, write_report_json
from msoqn.experiments import (
    TARGET,
    artifact_case,
    bo_runs,
    convergence_experiment,
    default_convergence_reps,
    run_bo_config,
)
from msoqn.objectives import ObjectiveId
from msoqn.solvers import SolverConfig, Variant

DEFAULTS = {
    "artifacts": {
        "objective": "rosenbrock", "dim": "5", "cases": "lbfgsb:3,bfgs:3,bfgs:10", "memory": "10",
        "max_iters": "500", "grad_tol": "1e-8", "ftol": "2.2e-9", "seed": "0", "out_dir": "out/artifacts",
    },
    "convergence": {
        "objective": "rosenbrock", "dim": "5", "restarts": "1,2,5,10", "variant": "lbfgsb", "memory": "10",
        "max_iters": "300", "grad_tol": "0", "ftol": "0", "seed": "0", "reps": "200",
        "out_dir": "out/convergence",
    },
    "bobench": {
        "objective": "rastrigin", "dim": "5", "scheme": "seq,cbe,dbe", "restarts": "10", "memory": "10",
        "max_iters": "200", "grad_tol": "1e-2", "ftol": "2.2e-9", "seed": "0", "seeds": "5", "trials": "60",
        "n_init": "10", "workers": "1", "out_dir": "out/bobench",
    },
}
PAPER_SCALE = {
    "convergence": {"reps": "1000"},
    "bobench": {"trials": "300", "seeds": "20"},
}
FLAGS = ("objective", "dim", "restarts", "memory", "max_iters", "grad_tol", "ftol", "scheme", "variant",
         "cases", "seed", "seeds", "reps", "trials", "n_init", "workers", "out_dir", "deterministic",
         "paper_scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msoqn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("artifacts", "inverse-Hessian artifacts of coupled vs. sequential multi-start"),
        ("convergence", "coupled-batched convergence speed as the number of restarts grows"),
        ("bobench", "Bayesian optimization benchmark across multi-start schemes"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--objective", help="objective name(s), comma-separated")
        p.add_argument("--dim", help="dimension(s), comma-separated")
        p.add_argument("--restarts", help="number(s) of restarts B, comma-separated")
        p.add_argument("--memory", help="L-BFGS-B memory size m")
        p.add_argument("--max-iters", dest="max_iters", help="solver iteration cap")
        p.add_argument("--grad-tol", dest="grad_tol", help="projected-gradient sup-norm tolerance")
        p.add_argument("--ftol", help="relative function-decrease tolerance")
        p.add_argument("--scheme", help="multi-start scheme(s): seq, cbe, dbe")
        p.add_argument("--variant", help="solver variant(s): lbfgsb, bfgs")
        p.add_argument("--cases", help="artifact cases as variant:B pairs")
        p.add_argument("--seed", help="base seed")
        p.add_argument("--seeds", help="number of seeds (bobench)")
        p.add_argument("--reps", help="repetition budget; each B runs reps // B times")
        p.add_argument("--trials", help="BO trials per run")
        p.add_argument("--n-init", dest="n_init", help="initial random BO trials")
        p.add_argument("--workers", help="parallel worker processes across runs")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--deterministic", action="store_const", const="true",
                       help="point-wise evaluation; omit timings so reruns are byte-identical")
        p.add_argument("--paper-scale", dest="paper_scale", action="store_const", const="true",
                       help="use the full-scale repetition/trial/seed counts")
    return parser


def resolve_settings(command: str, args: argparse.Namespace) -> dict[str, str]:
    file_settings = load_config(args.config) if args.config else {}
    unknown = set(file_settings) - set(FLAGS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    flags = {k: v for k, v in vars(args).items() if k in FLAGS and v is not None}
    explicit = {**file_settings, **flags}
    settings = {"deterministic": "false", "paper_scale": "false", **DEFAULTS[command]}
    if parse_bool(explicit.get("paper_scale", "false")):
        settings.update(PAPER_SCALE.get(command, {}))
    settings.update(explicit)
    validate_settings(settings)
    return settings


POSITIVE_INTS = ("dim", "restarts", "memory", "max_iters", "seeds", "reps", "trials", "n_init", "workers")


def validate_settings(s: dict[str, str]) -> None:
    """Reject malformed settings before any run starts."""
    for key in POSITIVE_INTS:
        if key in s and any(v <= 0 for v in _ints(s[key])):
            raise ConfigError(f"{key} must be positive, got {s[key]!r}")
    int(s["seed"])
    parse_bool(s["deterministic"])
    parse_bool(s["paper_scale"])
    solver_config(s)
    for name in split_list(s["objective"]):
        ObjectiveId.parse(name)
    for name in split_list(s.get("variant", "lbfgsb")):
        Variant.parse(name)
    for name in split_list(s.get("scheme", "seq")):
        if name not in ("seq", "cbe", "dbe"):
            raise ConfigError(f"unknown scheme {name!r}")


def _ints(value) -> list[int]:
    out = [int(v) for v in split_list(value)]
    if not out:
        raise ConfigError("empty list")
    return out


def solver_config(s: dict[str, str]) -> SolverConfig:
    return SolverConfig(memory=int(s["memory"]), max_iters=int(s["max_iters"]),
                        grad_tol=float(s["grad_tol"]), ftol=float(s["ftol"]))


def config_hash(command: str, settings: dict[str, str]) -> str:
    # Output location and parallelism do not change results, so they stay out of the hash.
    relevant = {k: v for k, v in settings.items() if k not in ("out_dir", "workers")}
    canonical = json.dumps({"command": command, **relevant}, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def metadata(command: str, settings: dict[str, str], seed: int | None = None) -> dict:
    return {"command": command, "config_hash": config_hash(command, settings),
            "seed": int(settings["seed"]) if seed is None else seed, "version": __version__}


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def csv_text(meta: dict, columns, rows) -> str:
    """CSV with ``# key: value`` metadata lines; rows are tuples or dicts keyed by column."""
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        values = [row[c] for c in columns] if isinstance(row, dict) else row
        writer.writerow([_fmt(v) for v in values])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def cmd_artifacts(s: dict[str, str]) -> list[dict]:
    out = Path(s["out_dir"])
    cfg = solver_config(s)
    seed = int(s["seed"])
    cases = []
    if "variant" in s or "restarts" in s:
        variants = split_list(s.get("variant", "lbfgsb"))
        restarts = _ints(s.get("restarts", "3"))
        cases = [(v, b) for v in variants for b in restarts]
    else:
        for item in split_list(s["cases"]):
            v, b = item.split(":")
            cases.append((v, int(b)))
    runs = []
    for objective in split_list(s["objective"]):
        for dim in _ints(s["dim"]):
            for variant, b in cases:
                name = f"{ObjectiveId.parse(objective).value}_{Variant.parse(variant).value}_B{b}_D{dim}"
                meta = {**metadata("artifacts", s), "B": b, "D": dim, "m": cfg.memory,
                        "variant": Variant.parse(variant).value, "objective": objective}
                try:
                    report = artifact_case(variant, b, dim, cfg, seed, objective)
                    header = [f"{k}: {meta[k]}" for k in sorted(meta)]
                    files = []
                    for label, h in (("h_true", report.h_true), ("h_seq", report.h_seq), ("h_cbe", report.h_cbe)):
                        path = out / f"{name}_{label}.csv"
                        path.parent.mkdir(parents=True, exist_ok=True)
                        write_matrix_csv(path, h, header)
                        files.append(str(path))
                    path = out / f"{name}_report.json"
                    write_report_json(path, report, meta)
                    files.append(str(path))
                    runs.append({"name": name, "status": "ok", "files": files,
                                 "e_rel_seq": report.e_rel_seq, "e_rel_cbe": report.e_rel_cbe,
                                 "offdiag_ratio_seq": report.offdiag_ratio_seq,
                                 "offdiag_ratio_cbe": report.offdiag_ratio_cbe})
                except Exception as exc:  # noqa: BLE001 - partial failures go to the manifest
                    runs.append({"name": name, "status": "failed", "error": repr(exc)})
    return runs


def cmd_convergence(s: dict[str, str]) -> list[dict]:
    out = Path(s["out_dir"])
    cfg = solver_config(s)
    seed = int(s["seed"])
    budget = int(s["reps"])
    meta = metadata("convergence", s)
    runs, summary = [], []
    for objective in split_list(s["objective"]):
        for dim in _ints(s["dim"]):
            for variant in split_list(s["variant"]):
                for b in _ints(s["restarts"]):
                    name = f"{ObjectiveId.parse(objective).value}_{Variant.parse(variant).value}_B{b}_D{dim}"
                    try:
                        reps = default_convergence_reps(b, budget)
                        res = convergence_experiment(b, reps, seed, cfg, variant, objective, dim)
                        q25, q75 = res.quartiles
                        rows = [(t, m, lo, hi) for t, (m, lo, hi) in enumerate(zip(res.median, q25, q75))]
                        path = out / f"convergence_{name}.csv"
                        write_text(path, csv_text({**meta, "B": b, "reps": reps, "variant": variant},
                                                  ("iteration", "median", "q25", "q75"), rows))
                        hits = res.hit_iterations()
                        summary.append((objective, dim, variant, b, reps, res.median_hit(),
                                        float(np.median(hits)), *np.percentile(hits, [25, 75])))
                        runs.append({"name": name, "status": "ok", "files": [str(path)],
                                     "median_hit_iter": res.median_hit()})
                    except Exception as exc:  # noqa: BLE001
                        runs.append({"name": name, "status": "failed", "error": repr(exc)})
    path = out / "convergence_summary.csv"
    write_text(path, csv_text({**meta, "target": TARGET},
                              ("objective", "D", "variant", "B", "reps", "median_trace_hit_iter",
                               "median_hit_iter", "q25_hit_iter", "q75_hit_iter"), summary))
    return runs


def _run_one(cfg: BoConfig):
    try:
        return cfg, run_bo_config(cfg), None
    except Exception:  # noqa: BLE001
        return cfg, None, traceback.format_exc()


def cmd_bobench(s: dict[str, str]) -> list[dict]:
    out = Path(s["out_dir"])
    deterministic = parse_bool(s["deterministic"])
    seed0 = int(s["seed"])
    seeds = range(seed0, seed0 + int(s["seeds"]))
    restarts = _ints(s["restarts"])
    if len(restarts) != 1:
        raise ConfigError("bobench takes a single --restarts value")
    configs = bo_runs(
        [ObjectiveId.parse(o).value for o in split_list(s["objective"])], _ints(s["dim"]),
        split_list(s["scheme"]), list(seeds), n_trials=int(s["trials"]), n_init=int(s["n_init"]),
        restarts=restarts[0], solver=solver_config(s), deterministic=deterministic,
    )
    workers = int(s["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]

    runs, traces = [], []
    for cfg, trace, err in results:
        name = f"{cfg.objective}_D{cfg.dim}_{cfg.scheme}_seed{cfg.seed}"
        if trace is None:
            runs.append({"name": name, "status": "failed", "error": err})
            continue
        path = out / "traces" / f"{name}.jsonl"
        write_text(path, trace.to_jsonl(metadata("bobench", s, cfg.seed), timings=not deterministic))
        traces.append(trace)
        runs.append({"name": name, "status": "ok", "files": [str(path)]})
    rows = summarize(traces, timings=not deterministic) if traces else []
    write_text(out / "bobench_summary.csv", csv_text(metadata("bobench", s), SUMMARY_COLUMNS, rows))
    return runs


COMMANDS = {"artifacts": cmd_artifacts, "convergence": cmd_convergence, "bobench": cmd_bobench}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args.command, args)
        runs = COMMANDS[args.command](settings)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"msoqn {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = Path(settings["out_dir"])
    manifest = {"meta": metadata(args.command, settings), "settings": settings, "runs": runs,
                "failed": [r["name"] for r in runs if r["status"] != "ok"]}
    write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for r in runs:
        print(f"{r['status']:>6}  {r['name']}")
    if manifest["failed"]:
        print(f"{len(manifest['failed'])} run(s) failed; see {out / 'manifest.json'}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
