"""Dense linear-algebra helpers and the seeded random stream.

Matrices are plain ``numpy`` arrays (row-major, float64). Factorizations are
backed by LAPACK through numpy/scipy; this module only adds the error
semantics and the jitter ladder used by the GP code.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

JITTER_LADDER = (1e-10, 1e-8, 1e-6)


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A Cholesky pivot was non-positive after adding jitter."""


class SingularMatrix(np.linalg.LinAlgError):
    """A triangular system has a zero on its diagonal."""


def cholesky(a: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor of ``a + jitter * I``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    if jitter:
        a = a + jitter * np.eye(a.shape[0])
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def cholesky_with_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Factor ``a``, escalating jitter along :data:`JITTER_LADDER`.

    Jitter levels are relative to the mean diagonal. Returns the factor and
    the absolute jitter that was added (0 when none was needed).
    """
    a = np.asarray(a, dtype=float)
    try:
        return cholesky(a), 0.0
    except NotPositiveDefinite:
        pass
    scale = max(float(np.mean(np.diag(a))), np.finfo(float).tiny)
    for rel in JITTER_LADDER:
        try:
            return cholesky(a, rel * scale), rel * scale
        except NotPositiveDefinite:
            continue
    raise NotPositiveDefinite(
        f"matrix not positive definite even with jitter {JITTER_LADDER[-1]:g} x mean diagonal"
    )


def solve_triangular(l: np.ndarray, b: np.ndarray, transposed: bool = False) -> np.ndarray:
    """Solve ``l x = b`` (or ``l.T x = b``) for lower-triangular ``l``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    l = np.asarray(l, dtype=float)
    if np.any(np.diag(l) == 0.0):
        raise SingularMatrix("zero diagonal entry in triangular matrix")
    return scipy.linalg.solve_triangular(l, b, lower=True, trans=1 if transposed else 0, check_finite=False)


def cho_solve(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(l l^T) x = b`` given the lower factor."""
    return solve_triangular(l, solve_triangular(l, b), transposed=True)


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(a))))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox-backed generator for ``seed`` and an optional stream path.

    Distinct ``stream`` tuples give statistically independent generators, so
    experiment components can draw without disturbing each other's sequences.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(ss))
