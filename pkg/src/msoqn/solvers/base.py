from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class InvalidBounds(ValueError):
    pass


class Variant(str, enum.Enum):
    LBFGSB = "lbfgsb"
    DENSE_BFGS = "bfgs"

    @classmethod
    def parse(cls, name: str | Variant) -> Variant:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        return {"lbfgsb": cls.LBFGSB, "bfgs": cls.DENSE_BFGS, "densebfgs": cls.DENSE_BFGS}[key]


class Termination(str, enum.Enum):
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    FTOL = "ftol"
    LINE_SEARCH_FAILED = "line_search_failed"


class Phase(str, enum.Enum):
    AWAITING_INITIAL_EVAL = "awaiting_initial_eval"
    IN_LINE_SEARCH = "in_line_search"
    CONVERGED = "converged"


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by the quasi-Newton solvers.

    ``grad_tol`` is compared against the sup-norm of the projected gradient;
    ``ftol`` against the relative decrease ``(f_old - f) / max(|f_old|, |f|, 1)``.
    """

    memory: int = 10
    max_iters: int = 200
    grad_tol: float = 1e-5
    ftol: float = 2.2e-9
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search_trials: int = 20

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.grad_tol < 0 or self.ftol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.max_iters < 0 or self.max_line_search_trials < 1:
            raise ValueError("iteration limits must be positive")


@dataclass(frozen=True)
class NeedEvaluation:
    x: np.ndarray


@dataclass(frozen=True)
class Finished:
    x: np.ndarray
    f: float
    reason: Termination


EvaluationRequest = NeedEvaluation | Finished


def projected_gradient(x: np.ndarray, g: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(x - g, lower, upper) - x


def check_bounds(n: int, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
    if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower >= upper):
        raise InvalidBounds("every lower bound must be strictly below its upper bound")
    return lower, upper
