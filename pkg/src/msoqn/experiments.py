"""Experiment runners behind the CLI: inverse-Hessian artifacts, convergence vs. B, BO benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msoqn.bo import BoConfig, BoTrace, run_bo
from msoqn.diagnostics import ArtifactReport, artifact_experiment
from msoqn.mso import BatchObjective, mean_objective_trace, run_cbe
from msoqn.numerics import make_rng
from msoqn.objectives import Objective, evaluate, make_objective
from msoqn.solvers import SolverConfig, Variant

CONVERGENCE_CONFIG = SolverConfig(memory=10, max_iters=300, grad_tol=0.0, ftol=0.0)
TARGET = 1e-12


def negated(obj: Objective) -> BatchObjective:
    def fun(x):
        out = evaluate(obj, x, want_grad=True)
        return -out.value, -out.gradient
    return BatchObjective.from_pointwise(fun)


@dataclass
class ConvergenceResult:
    B: int
    traces: np.ndarray  # (reps, max_iters + 1), mean objective per iteration

    @property
    def reps(self) -> int:
        return self.traces.shape[0]

    @property
    def median(self) -> np.ndarray:
        return np.median(self.traces, axis=0)

    @property
    def quartiles(self) -> tuple[np.ndarray, np.ndarray]:
        q25, q75 = np.percentile(self.traces, [25, 75], axis=0)
        return q25, q75

    def hit_iterations(self, target: float = TARGET) -> np.ndarray:
        hit = self.traces <= target
        first = np.argmax(hit, axis=1).astype(float)
        first[~hit.any(axis=1)] = np.inf
        return first

    def median_hit(self, target: float = TARGET) -> float:
        """First iteration at which the median trace reaches ``target`` (inf if never)."""
        below = np.flatnonzero(self.median <= target)
        return float(below[0]) if below.size else float("inf")


def convergence_experiment(n_restarts: int, reps: int, seed: int = 0, cfg: SolverConfig | None = None,
                           variant: Variant | str = Variant.LBFGSB, objective: str = "rosenbrock",
                           dim: int = 5) -> ConvergenceResult:
    """Repeat C-BE from uniform starts and collect mean-objective traces per iteration."""
    cfg = cfg or CONVERGENCE_CONFIG
    obj = make_objective(objective, dim)
    rng = make_rng(seed, n_restarts)
    length = cfg.max_iters + 1
    traces = np.empty((reps, length))
    for rep in range(reps):
        starts = rng.uniform(obj.lower, obj.upper, size=(n_restarts, dim))
        outcome = run_cbe(negated(obj), starts, obj.lower, obj.upper, cfg, variant)
        trace = -mean_objective_trace(outcome.per_restart, n_restarts)
        traces[rep, :trace.size] = trace
        traces[rep, trace.size:] = trace[-1]
    return ConvergenceResult(n_restarts, traces)


def default_convergence_reps(n_restarts: int, budget: int = 200) -> int:
    return max(1, budget // n_restarts)


def artifact_case(variant: str, n_restarts: int, dim: int = 5, cfg: SolverConfig | None = None,
                  seed: int = 0, objective: str = "rosenbrock") -> ArtifactReport:
    return artifact_experiment(make_objective(objective, dim), n_restarts, cfg, variant, seed)


def bo_runs(objectives, dims, schemes, seeds, **kwargs) -> list[BoConfig]:
    return [BoConfig(objective=o, dim=d, scheme=s, seed=seed, **kwargs)
            for o in objectives for d in dims for s in schemes for seed in seeds]


def run_bo_config(cfg: BoConfig) -> BoTrace:
    return run_bo(cfg)
