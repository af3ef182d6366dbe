"""Off-diagonal artifact measurements for coupled vs. per-restart quasi-Newton runs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from msoqn.mso import BatchObjective, run_cbe, run_seq
from msoqn.numerics import frobenius_norm, make_rng
from msoqn.objectives import Objective, evaluate, true_block_inverse_hessian
from msoqn.solvers import SolverConfig, Variant


class ZeroReference(ValueError):
    pass


class ZeroMatrix(ValueError):
    pass


def e_rel(h: np.ndarray, h_true: np.ndarray) -> float:
    """Relative Frobenius error of ``h`` against ``h_true``."""
    h, h_true = np.asarray(h, dtype=float), np.asarray(h_true, dtype=float)
    if h.shape != h_true.shape:
        raise ValueError(f"shape mismatch: {h.shape} vs {h_true.shape}")
    ref = frobenius_norm(h_true)
    if ref == 0.0:
        raise ZeroReference("reference matrix has zero norm")
    return frobenius_norm(h - h_true) / ref


def block_mask(n_blocks: int, dim: int) -> np.ndarray:
    return np.kron(np.eye(n_blocks, dtype=bool), np.ones((dim, dim), dtype=bool))


def offdiag_block_ratio(h: np.ndarray, n_blocks: int, dim: int) -> float:
    """Share of the Frobenius norm of ``h`` lying outside its ``dim x dim`` diagonal blocks."""
    h = np.asarray(h, dtype=float)
    if h.shape != (n_blocks * dim, n_blocks * dim):
        raise ValueError(f"expected a {n_blocks * dim} square matrix, got {h.shape}")
    total = frobenius_norm(h)
    if total == 0.0:
        raise ZeroMatrix("matrix is identically zero")
    off = np.where(block_mask(n_blocks, dim), 0.0, h)
    return frobenius_norm(off) / total


@dataclass
class ArtifactReport:
    h_true: np.ndarray
    h_seq: np.ndarray
    h_cbe: np.ndarray
    e_rel_seq: float
    e_rel_cbe: float
    offdiag_ratio_seq: float
    offdiag_ratio_cbe: float
    B: int
    D: int
    variant: str = Variant.LBFGSB.value
    seed: int = 0
    memory: int = 10
    iters_seq: tuple[int, ...] = ()
    iters_cbe: int = 0

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if not k.startswith("h_")}
        out["iters_seq"] = list(self.iters_seq)
        return out


ARTIFACT_CONFIG = SolverConfig(memory=10, max_iters=500, grad_tol=1e-8)


def artifact_experiment(obj: Objective, n_restarts: int, cfg: SolverConfig | None = None,
                        variant: Variant | str = Variant.LBFGSB, seed: int = 0) -> ArtifactReport:
    """Compare per-restart and coupled inverse-Hessian approximations at convergence.

    Both schemes start from the same seeded points. The true inverse Hessian is
    evaluated at the sequential run's final points for both comparisons.
    """
    cfg = cfg or ARTIFACT_CONFIG
    variant = Variant.parse(variant)
    dim = obj.dim
    starts = make_rng(seed, n_restarts, dim).uniform(obj.lower, obj.upper, size=(n_restarts, dim))

    def neg(x):
        out = evaluate(obj, x, want_grad=True)
        return -out.value, -out.gradient

    seq = run_seq(BatchObjective.from_pointwise(neg, deterministic=True), starts, obj.lower, obj.upper, cfg, variant)
    cbe = run_cbe(BatchObjective.from_pointwise(neg, deterministic=True), starts, obj.lower, obj.upper, cfg, variant)

    h_seq = scipy.linalg.block_diag(*(s.inverse_hessian() for s in seq.states))
    h_cbe = cbe.states[0].inverse_hessian()
    finals = np.stack([r.x_final for r in seq.per_restart])
    h_true = true_block_inverse_hessian(obj, finals)
    return ArtifactReport(
        h_true=h_true, h_seq=h_seq, h_cbe=h_cbe,
        e_rel_seq=e_rel(h_seq, h_true), e_rel_cbe=e_rel(h_cbe, h_true),
        offdiag_ratio_seq=offdiag_block_ratio(h_seq, n_restarts, dim),
        offdiag_ratio_cbe=offdiag_block_ratio(h_cbe, n_restarts, dim),
        B=n_restarts, D=dim, variant=variant.value, seed=seed, memory=cfg.memory,
        iters_seq=tuple(seq.iterations), iters_cbe=cbe.per_restart[0].n_iters,
    )


def write_matrix_csv(path: Path, h: np.ndarray, header: list[str] | None = None) -> None:
    lines = [f"# {line}" for line in header or []]
    lines += [",".join(repr(float(v)) for v in row) for row in h]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_matrix_csv(path: Path) -> np.ndarray:
    rows = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line and not line.startswith("#")]
    return np.array([[float(v) for v in row.split(",")] for row in rows])


def write_report_json(path: Path, report: ArtifactReport, meta: dict | None = None) -> None:
    payload = {"meta": meta or {}, "report": report.summary()}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
