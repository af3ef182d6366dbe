"""Benchmark objectives with analytic derivatives.

Rosenbrock drives the solver diagnostics; the other four are simplified,
rotation-free versions of the BBOB functions of the same name, used as BO
targets on ``[-5, 5]^D``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from msoqn.numerics import make_rng

BBOB_DOMAIN = (-5.0, 5.0)
ROSENBROCK_DOMAIN = (0.0, 3.0)


class UnsupportedDerivative(ValueError):
    pass


class SingularHessian(np.linalg.LinAlgError):
    pass


class ObjectiveId(str, enum.Enum):
    ROSENBROCK = "rosenbrock"
    SPHERE = "sphere"
    RASTRIGIN = "rastrigin"
    ATTRACTIVE_SECTOR = "attractive_sector"
    STEP_ELLIPSOIDAL = "step_ellipsoidal"

    @classmethod
    def parse(cls, name: str | ObjectiveId) -> ObjectiveId:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"as": "attractive_sector", "se": "step_ellipsoidal"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class Objective:
    id: ObjectiveId
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise ValueError("bounds must have one entry per dimension")
        if np.any(lower >= upper):
            raise ValueError("every lower bound must be below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.shift is not None:
            shift = np.asarray(self.shift, dtype=float)
            if shift.shape != (self.dim,) or np.any(shift <= lower) or np.any(shift >= upper):
                raise ValueError("shift must lie strictly inside the bounds")
            object.__setattr__(self, "shift", shift)

    @property
    def differentiable(self) -> bool:
        return self.id is not ObjectiveId.STEP_ELLIPSOIDAL

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper


@dataclass
class EvalOutput:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


def make_objective(name: str | ObjectiveId, dim: int, seed: int | None = None) -> Objective:
    """Build an objective on its conventional domain.

    BBOB-style functions get a shift drawn uniformly from the central 80% of
    ``[-5, 5]`` when ``seed`` is given; Rosenbrock is never shifted.
    """
    oid = ObjectiveId.parse(name)
    if oid is ObjectiveId.ROSENBROCK:
        lo, hi = ROSENBROCK_DOMAIN
        return Objective(oid, dim, np.full(dim, lo), np.full(dim, hi))
    lo, hi = BBOB_DOMAIN
    shift = None
    if seed is not None:
        margin = 0.1 * (hi - lo)
        shift = make_rng(seed, 7).uniform(lo + margin, hi - margin, size=dim)
    return Objective(oid, dim, np.full(dim, lo), np.full(dim, hi), shift)


def _offset(obj: Objective, x: np.ndarray) -> np.ndarray:
    return x if obj.shift is None else x - obj.shift


def _rosenbrock(z, want_grad, want_hess):
    head, tail = z[:-1], z[1:]
    inner = tail - head**2
    value = float(np.sum(100.0 * inner**2 + (1.0 - head) ** 2))
    grad = hess = None
    if want_grad:
        grad = np.zeros_like(z)
        grad[:-1] += -400.0 * head * inner - 2.0 * (1.0 - head)
        grad[1:] += 200.0 * inner
    if want_hess:
        n = z.size
        hess = np.zeros((n, n))
        idx = np.arange(n - 1)
        hess[idx, idx] += 1200.0 * head**2 - 400.0 * tail + 2.0
        hess[idx + 1, idx + 1] += 200.0
        hess[idx, idx + 1] = hess[idx + 1, idx] = -400.0 * head
    return value, grad, hess


def _sphere(z, want_grad, want_hess):
    value = float(np.sum(z**2))
    grad = 2.0 * z if want_grad else None
    hess = 2.0 * np.eye(z.size) if want_hess else None
    return value, grad, hess


def _rastrigin(z, want_grad, want_hess):
    two_pi = 2.0 * np.pi
    value = float(10.0 * z.size + np.sum(z**2 - 10.0 * np.cos(two_pi * z)))
    grad = 2.0 * z + 10.0 * two_pi * np.sin(two_pi * z) if want_grad else None
    hess = np.diag(2.0 + 10.0 * two_pi**2 * np.cos(two_pi * z)) if want_hess else None
    return value, grad, hess


def _sector_weights(z, shift):
    s = np.zeros_like(z) if shift is None else shift
    return np.where(z * s > 0.0, 100.0, 1.0)


def _step_ellipsoidal(z):
    d = z.size
    rounded = np.where(np.abs(z) > 0.5, np.floor(0.5 + z), np.floor(0.5 + 10.0 * z) / 10.0)
    expo = 2.0 * np.arange(d) / (d - 1) if d > 1 else np.zeros(1)
    return float(0.1 * max(abs(z[0]) / 1e4, np.sum(10.0**expo * rounded**2)))


def evaluate(obj: Objective, x, want_grad: bool = False, want_hess: bool = False) -> EvalOutput:
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.dim,):
        raise ValueError(f"expected a point of dimension {obj.dim}, got shape {x.shape}")
    if (want_grad or want_hess) and not obj.differentiable:
        raise UnsupportedDerivative(f"{obj.id.value} exposes no derivatives")
    z = _offset(obj, x)
    if obj.id is ObjectiveId.ROSENBROCK:
        value, grad, hess = _rosenbrock(z, want_grad, want_hess)
    elif obj.id is ObjectiveId.SPHERE:
        value, grad, hess = _sphere(z, want_grad, want_hess)
    elif obj.id is ObjectiveId.RASTRIGIN:
        value, grad, hess = _rastrigin(z, want_grad, want_hess)
    elif obj.id is ObjectiveId.ATTRACTIVE_SECTOR:
        w = _sector_weights(z, obj.shift)
        value = float(np.sum((w * z) ** 2))
        grad = 2.0 * w**2 * z if want_grad else None
        hess = np.diag(2.0 * w**2) if want_hess else None
    else:
        value, grad, hess = _step_ellipsoidal(z), None, None
    return EvalOutput(value, grad, hess)


def sum_objective(obj: Objective, X, want_grad: bool = False) -> EvalOutput:
    """Summed objective over ``B`` stacked points (rows of ``X``).

    The gradient is the concatenation of the per-point gradients.
    """
    X = np.asarray(X, dtype=float).reshape(-1, obj.dim)
    outs = [evaluate(obj, row, want_grad=want_grad) for row in X]
    value = float(sum(o.value for o in outs))
    grad = np.concatenate([o.gradient for o in outs]) if want_grad else None
    return EvalOutput(value, grad)


def true_block_inverse_hessian(obj: Objective, X) -> np.ndarray:
    """Block-diagonal inverse Hessian of the summed objective at ``X``."""
    X = np.asarray(X, dtype=float).reshape(-1, obj.dim)
    b, d = X.shape
    out = np.zeros((b * d, b * d))
    for i, row in enumerate(X):
        hess = evaluate(obj, row, want_hess=True).hessian
        try:
            block = np.linalg.inv(hess)
        except np.linalg.LinAlgError:
            raise SingularHessian(f"Hessian of block {i} is singular") from None
        if not np.all(np.isfinite(block)) or np.linalg.cond(hess) > 1e15:
            raise SingularHessian(f"Hessian of block {i} is numerically singular")
        out[i * d:(i + 1) * d, i * d:(i + 1) * d] = block
    return out
