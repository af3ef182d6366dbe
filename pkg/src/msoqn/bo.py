"""Bayesian optimization loop with LogEI maximized by a configurable multi-start scheme."""

from __future__ import annotations

import json
import statistics
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from msoqn.gp import DegenerateDataWarning, GpModel, KernelParams, fit, log_ei
from msoqn.mso import BatchObjective, run_scheme
from msoqn.numerics import make_rng
from msoqn.objectives import evaluate, make_objective
from msoqn.solvers import SolverConfig

BO_SOLVER_CONFIG = SolverConfig(memory=10, max_iters=200, grad_tol=1e-2)
DUPLICATE_TOL = 1e-10


@dataclass(frozen=True)
class BoConfig:
    objective: str = "rastrigin"
    dim: int = 5
    n_trials: int = 60
    n_init: int = 10
    restarts: int = 10
    scheme: str = "dbe"
    solver: SolverConfig = BO_SOLVER_CONFIG
    seed: int = 0
    deterministic: bool = False
    fit_restarts: int = 4
    fit_max_iters: int = 50

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.n_trials < self.n_init:
            raise ValueError("n_trials must be at least n_init")
        if self.scheme not in ("seq", "cbe", "dbe"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class TrialRecord:
    index: int
    x: list[float]
    value: float
    kind: str  # "init", "bo" or "fallback"
    iters: list[int] = field(default_factory=list)
    acq_time: float = 0.0
    fit_time: float = 0.0
    acq_evals: int = 0
    acq_batches: int = 0
    acq_value: float | None = None
    events: list[str] = field(default_factory=list)


@dataclass
class BoTrace:
    config: BoConfig
    trials: list[TrialRecord]
    runtime: float
    best_values: list[float]

    @property
    def best_value(self) -> float:
        return self.best_values[-1]

    @property
    def all_iters(self) -> list[int]:
        return [it for t in self.trials for it in t.iters]

    @property
    def median_iters(self) -> float:
        its = self.all_iters
        return float(statistics.median(its)) if its else float("nan")

    @property
    def acq_time(self) -> float:
        return float(sum(t.acq_time for t in self.trials))

    @property
    def fit_time(self) -> float:
        return float(sum(t.fit_time for t in self.trials))

    def chosen_points(self) -> np.ndarray:
        return np.array([t.x for t in self.trials])

    def to_jsonl(self, meta: dict | None = None, timings: bool = True) -> str:
        """One meta line, one line per trial, one summary line. ``timings=False`` writes them as null."""
        def clock(v):
            return v if timings else None

        cfg = asdict(self.config)
        lines = [json.dumps({"type": "meta", **(meta or {}), "config": cfg}, sort_keys=True)]
        for t in self.trials:
            rec = asdict(t)
            rec["acq_time"], rec["fit_time"] = clock(t.acq_time), clock(t.fit_time)
            lines.append(json.dumps({"type": "trial", **rec}, sort_keys=True))
        lines.append(json.dumps({
            "type": "summary", "best_value": self.best_value, "runtime": clock(self.runtime),
            "median_iters": self.median_iters, "acq_time": clock(self.acq_time),
            "fit_time": clock(self.fit_time),
        }, sort_keys=True))
        return "\n".join(lines) + "\n"


def log_ei_batch_objective(model: GpModel, f_best: float, deterministic: bool = False) -> BatchObjective:
    """LogEI over original coordinates; gradients carry the unit-cube chain-rule factor."""
    scale = model.upper - model.lower

    def fn(X):
        res = log_ei(model, model.to_unit(X), f_best)
        return res.values, res.gradients / scale

    return BatchObjective(fn, deterministic=deterministic)


def run_bo(cfg: BoConfig) -> BoTrace:
    start = time.perf_counter()
    obj = make_objective(cfg.objective, cfg.dim, seed=cfg.seed)
    lower, upper = obj.lower, obj.upper
    rng = make_rng(cfg.seed, 0)
    fit_rng = make_rng(cfg.seed, 1)

    trials: list[TrialRecord] = []
    X = rng.uniform(lower, upper, size=(cfg.n_init, cfg.dim))
    for i, x in enumerate(X):
        trials.append(TrialRecord(i, x.tolist(), evaluate(obj, x).value, "init"))
    y = np.array([t.value for t in trials])

    params: KernelParams | None = None
    for index in range(cfg.n_init, cfg.n_trials):
        events: list[str] = []
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", DegenerateDataWarning)
                model = fit(X, y, lower, upper, n_restarts=cfg.fit_restarts, max_iters=cfg.fit_max_iters,
                            init=params, rng=fit_rng)
            events += [f"warning: {w.message}" for w in caught if issubclass(w.category, DegenerateDataWarning)]
        except (np.linalg.LinAlgError, ValueError) as exc:
            model = None
            events.append(f"gp fit failed: {exc}")
        fit_time = time.perf_counter() - t0

        if model is None:
            x_next = rng.uniform(lower, upper)
            record = TrialRecord(index, x_next.tolist(), 0.0, "fallback", fit_time=fit_time, events=events)
        else:
            if not model.degenerate:
                params = model.params
            f_best = float(np.min(model.y)) if model.y.size else 0.0
            acq = log_ei_batch_objective(model, f_best, cfg.deterministic)
            starts = rng.uniform(lower, upper, size=(cfg.restarts, cfg.dim))
            t1 = time.perf_counter()
            outcome = run_scheme(cfg.scheme, acq, starts, lower, upper, cfg.solver)
            acq_time = time.perf_counter() - t1
            x_next = outcome.x_best
            if np.min(np.max(np.abs(X - x_next), axis=1)) <= DUPLICATE_TOL:
                x_next = rng.uniform(lower, upper)
                events.append("duplicate point replaced by a random draw")
            record = TrialRecord(index, x_next.tolist(), 0.0, "bo", iters=outcome.iterations,
                                 acq_time=acq_time, fit_time=fit_time, acq_evals=outcome.total_evals,
                                 acq_batches=outcome.total_batches, acq_value=outcome.f_best, events=events)
        record.value = evaluate(obj, x_next).value
        trials.append(record)
        X = np.vstack([X, x_next])
        y = np.append(y, record.value)

    best = np.minimum.accumulate(np.array([t.value for t in trials]))
    return BoTrace(cfg, trials, time.perf_counter() - start, best.tolist())


SUMMARY_COLUMNS = ("Objective", "D", "Method", "BestValue", "Runtime", "Iters")


def summarize(traces: list[BoTrace], timings: bool = True) -> list[dict]:
    """Median Best Value / Runtime / Iters per (objective, dimension, scheme), over seeds."""
    if not traces:
        raise ValueError("no traces to summarize")
    groups: dict[tuple, list[BoTrace]] = {}
    for tr in traces:
        groups.setdefault((tr.config.objective, tr.config.dim, tr.config.scheme), []).append(tr)
    rows = []
    for (objective, dim, scheme), group in groups.items():
        rows.append({
            "Objective": objective,
            "D": dim,
            "Method": scheme,
            "BestValue": float(statistics.median(t.best_value for t in group)),
            "Runtime": float(statistics.median(t.runtime for t in group)) if timings else None,
            "Iters": float(statistics.median(t.median_iters for t in group)),
        })
    return rows
