"""Multi-start drivers: sequential, coupled-batched (C-BE) and decoupled-batched (D-BE).

All drivers maximize. A :class:`BatchObjective` returns values to be
maximized; the drivers negate at the solver boundary because the solvers
minimize.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from msoqn.solvers import (
    Finished,
    NeedEvaluation,
    QuasiNewtonSolver,
    SolverConfig,
    Termination,
    Variant,
    projected_gradient,
    solver_new,
)

BatchFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class EmptyInput(ValueError):
    pass


class BatchObjective:
    """Batched value-and-gradient oracle with evaluation accounting.

    ``fn`` maps a ``(k, D)`` array to ``(values (k,), gradients (k, D))``.
    With ``deterministic=True`` each point is passed to ``fn`` on its own, so a
    point's result never depends on which other points share its batch.
    """

    def __init__(self, fn: BatchFn, deterministic: bool = False):
        self.fn = fn
        self.deterministic = deterministic
        self.n_evals = 0
        self.n_batches = 0
        self.elapsed = 0.0

    @classmethod
    def from_pointwise(cls, fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
                       deterministic: bool = False) -> BatchObjective:
        def fn(X):
            outs = [fun(x) for x in X]
            return np.array([o[0] for o in outs], dtype=float), np.array([o[1] for o in outs], dtype=float)
        return cls(fn, deterministic)

    def __call__(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        start = time.perf_counter()
        if self.deterministic:
            parts = [self.fn(X[i:i + 1]) for i in range(X.shape[0])]
            values = np.concatenate([np.asarray(p[0], dtype=float).ravel() for p in parts])
            grads = np.vstack([np.asarray(p[1], dtype=float).reshape(1, -1) for p in parts])
        else:
            values, grads = self.fn(X)
            values = np.asarray(values, dtype=float).ravel()
            grads = np.asarray(grads, dtype=float).reshape(X.shape)
        self.elapsed += time.perf_counter() - start
        if values.shape[0] != X.shape[0]:
            raise ValueError("batch objective returned the wrong number of values")
        self.n_evals += X.shape[0]
        self.n_batches += 1
        return values, grads


@dataclass
class RunRecord:
    """Per-restart trace; ``values[t]`` is the objective after ``t`` accepted iterations."""

    restart: int
    values: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None
    n_iters: int = 0
    reason: Termination | None = None
    x_final: np.ndarray | None = None
    f_final: float = -np.inf

    def log(self, x: np.ndarray, value: float, grad_norm: float) -> None:
        self.values.append(value)
        self.grad_norms.append(grad_norm)
        if self.iterates is not None:
            self.iterates.append(x.copy())


@dataclass
class MsoOutcome:
    x_best: np.ndarray
    f_best: float
    per_restart: list[RunRecord]
    total_evals: int
    total_batches: int
    wall_clock: float
    states: list[QuasiNewtonSolver] = field(default_factory=list, repr=False)
    batch_sizes: list[int] = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> list[int]:
        return [r.n_iters for r in self.per_restart]


def _prepare(starts, lower, upper):
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if starts.shape[0] < 1:
        raise EmptyInput("at least one start point is required")
    dim = starts.shape[1]
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (dim,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (dim,)).copy()
    return starts, lower, upper


def _block_grad_norm(x, g, lower, upper) -> float:
    return float(np.max(np.abs(projected_gradient(x, g, lower, upper)), initial=0.0))


def _outcome(records, acq, counters, start, states, batch_sizes) -> MsoOutcome:
    finals = np.array([r.f_final for r in records])
    best = int(np.argmax(finals))  # first index wins ties
    return MsoOutcome(
        x_best=records[best].x_final.copy(),
        f_best=float(finals[best]),
        per_restart=records,
        total_evals=acq.n_evals - counters[0],
        total_batches=acq.n_batches - counters[1],
        wall_clock=time.perf_counter() - start,
        states=states,
        batch_sizes=batch_sizes,
    )


def _finalize(record: RunRecord, solver: QuasiNewtonSolver, req: Finished) -> None:
    record.n_iters = solver.iter_count
    record.reason = req.reason
    record.x_final = req.x.copy()
    record.f_final = -req.f


def _step(solver, record, lower, upper, x, value, grad):
    before = len(solver.trace_f)
    req = solver.tell(-value, -grad)
    if len(solver.trace_f) > before:
        record.log(x, value, _block_grad_norm(x, -grad, lower, upper))
    if isinstance(req, Finished):
        _finalize(record, solver, req)
    return req


def run_seq(acq: BatchObjective, starts, lower, upper, cfg: SolverConfig | None = None,
            variant: Variant | str = Variant.LBFGSB, keep_iterates: bool = False) -> MsoOutcome:
    """Optimize each start to completion before moving to the next; one point per batch."""
    start = time.perf_counter()
    counters = (acq.n_evals, acq.n_batches)
    starts, lower, upper = _prepare(starts, lower, upper)
    records, states, sizes = [], [], []
    for b, x0 in enumerate(starts):
        record = RunRecord(b, iterates=[] if keep_iterates else None)
        solver, req = solver_new(x0, lower, upper, cfg, variant)
        while isinstance(req, NeedEvaluation):
            values, grads = acq(req.x[None, :])
            sizes.append(1)
            req = _step(solver, record, lower, upper, req.x, values[0], grads[0])
        records.append(record)
        states.append(solver)
    return _outcome(records, acq, counters, start, states, sizes)


def run_dbe(acq: BatchObjective, starts, lower, upper, cfg: SolverConfig | None = None,
            variant: Variant | str = Variant.LBFGSB, keep_iterates: bool = False) -> MsoOutcome:
    """Independent solver per start; each round serves every active solver in one batch.

    Restarts leave the active set as soon as their solver finishes, so the
    batch width only shrinks.
    """
    start = time.perf_counter()
    counters = (acq.n_evals, acq.n_batches)
    starts, lower, upper = _prepare(starts, lower, upper)
    records = [RunRecord(b, iterates=[] if keep_iterates else None) for b in range(len(starts))]
    states, pending = [], []
    for x0 in starts:
        solver, req = solver_new(x0, lower, upper, cfg, variant)
        states.append(solver)
        pending.append(req)
    active = list(range(len(starts)))
    sizes = []
    while active:
        X = np.stack([pending[b].x for b in active])
        values, grads = acq(X)
        sizes.append(len(active))
        still = []
        for i, b in enumerate(active):
            req = _step(states[b], records[b], lower, upper, X[i], values[i], grads[i])
            pending[b] = req
            if isinstance(req, NeedEvaluation):
                still.append(b)
        active = still
    return _outcome(records, acq, counters, start, states, sizes)


def run_cbe(acq: BatchObjective, starts, lower, upper, cfg: SolverConfig | None = None,
            variant: Variant | str = Variant.LBFGSB, keep_iterates: bool = False) -> MsoOutcome:
    """One solver over the stacked ``B*D`` variables maximizing the summed objective.

    Every restart stays in every batch until the shared solver stops.
    """
    start = time.perf_counter()
    counters = (acq.n_evals, acq.n_batches)
    starts, lower, upper = _prepare(starts, lower, upper)
    n_restarts, dim = starts.shape
    records = [RunRecord(b, iterates=[] if keep_iterates else None) for b in range(n_restarts)]
    solver, req = solver_new(starts.ravel(), np.tile(lower, n_restarts), np.tile(upper, n_restarts), cfg, variant)
    sizes = []
    while isinstance(req, NeedEvaluation):
        X = req.x.reshape(n_restarts, dim)
        values, grads = acq(X)
        sizes.append(n_restarts)
        before = len(solver.trace_f)
        req = solver.tell(-float(np.sum(values)), -grads.ravel())
        if len(solver.trace_f) > before:
            for b in range(n_restarts):
                records[b].log(X[b], float(values[b]), _block_grad_norm(X[b], -grads[b], lower, upper))
    for b, record in enumerate(records):
        record.n_iters = solver.iter_count
        record.reason = req.reason
        record.x_final = req.x.reshape(n_restarts, dim)[b].copy()
        record.f_final = record.values[-1] if record.values else -np.inf
    return _outcome(records, acq, counters, start, [solver], sizes)


SCHEMES = {"seq": run_seq, "cbe": run_cbe, "dbe": run_dbe}


def run_scheme(scheme: str, acq: BatchObjective, starts, lower, upper, cfg: SolverConfig | None = None,
               variant: Variant | str = Variant.LBFGSB, keep_iterates: bool = False) -> MsoOutcome:
    try:
        driver = SCHEMES[scheme.lower()]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}") from None
    return driver(acq, starts, lower, upper, cfg, variant, keep_iterates)


def mean_objective_trace(records: list[RunRecord], n_restarts: int | None = None) -> np.ndarray:
    """Per-iteration mean over restarts; shorter traces are padded with their last value."""
    traces = [r.values for r in records if r.values]
    if not traces:
        raise EmptyInput("no traces to average")
    if n_restarts is not None and n_restarts != len(traces):
        raise ValueError(f"expected {n_restarts} traces, got {len(traces)}")
    length = max(len(t) for t in traces)
    padded = np.array([list(t) + [t[-1]] * (length - len(t)) for t in traces])
    return padded.mean(axis=0)
