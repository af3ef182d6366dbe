"""Gaussian-process regression (Matern-5/2, ARD) and log expected improvement.

Inputs are normalized to the unit cube and targets standardized before
fitting; :func:`posterior` and :func:`log_ei` work in those coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from msoqn.numerics import cho_solve, cholesky_with_jitter, make_rng, solve_triangular
from msoqn.solvers import SolverConfig, minimize

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-8
VAR_FLOOR = 1e-16
NOISE_FLOOR = 1e-12

LOG_LENGTHSCALE_BOUNDS = (math.log(1e-3), math.log(10.0))
LOG_SIGNAL_BOUNDS = (math.log(1e-3), math.log(1e3))
LOG_NOISE_BOUNDS = (math.log(1e-8), math.log(1.0))


class DegenerateDataWarning(UserWarning):
    """Targets have zero variance; the model falls back to the prior."""


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or self.signal_variance <= 0:
            raise ValueError("lengthscales and signal variance must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "noise_variance", max(float(self.noise_variance), NOISE_FLOOR))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        return np.concatenate([np.log(self.lengthscales), [math.log(self.signal_variance), math.log(self.noise_variance)]])

    @classmethod
    def from_log(cls, theta) -> KernelParams:
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), math.exp(theta[-2]), math.exp(theta[-1]))


def log_param_bounds(dim: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([LOG_LENGTHSCALE_BOUNDS[0]] * dim + [LOG_SIGNAL_BOUNDS[0], LOG_NOISE_BOUNDS[0]])
    hi = np.array([LOG_LENGTHSCALE_BOUNDS[1]] * dim + [LOG_SIGNAL_BOUNDS[1], LOG_NOISE_BOUNDS[1]])
    return lo, hi


def _scaled_sq(X, Z, lengthscales):
    diff = (X[:, None, :] - Z[None, :, :]) / lengthscales
    return diff, np.sum(diff * diff, axis=-1)


def _matern(r):
    e = np.exp(-SQRT5 * r)
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e, e


def kernel(x, z, p: KernelParams) -> float:
    """Matern-5/2 covariance between two points."""
    x, z = np.asarray(x, dtype=float), np.asarray(z, dtype=float)
    r = math.sqrt(float(np.sum(((x - z) / p.lengthscales) ** 2)))
    return p.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)


def kernel_matrix(X, Z, p: KernelParams) -> np.ndarray:
    _, sq = _scaled_sq(np.atleast_2d(X), np.atleast_2d(Z), p.lengthscales)
    base, _ = _matern(np.sqrt(sq))
    return p.signal_variance * base


def log_marginal_likelihood(theta, X, y, with_grad: bool = True):
    """Log marginal likelihood over log-parameters and its gradient."""
    p = KernelParams.from_log(theta)
    n = X.shape[0]
    diff, sq = _scaled_sq(X, X, p.lengthscales)
    r = np.sqrt(sq)
    base, e = _matern(r)
    K = p.signal_variance * base + p.noise_variance * np.eye(n)
    L, _ = cholesky_with_jitter(K)
    alpha = cho_solve(L, y)
    value = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * LOG_2PI
    if not with_grad:
        return value
    A = np.outer(alpha, alpha) - cho_solve(L, np.eye(n))
    radial = p.signal_variance * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    grad = np.empty(theta.size)
    grad[:-2] = 0.5 * np.einsum("ij,ij,ijd->d", A, radial, diff * diff)
    grad[-2] = 0.5 * float(np.sum(A * (p.signal_variance * base)))
    grad[-1] = 0.5 * float(np.trace(A)) * p.noise_variance
    return value, grad


@dataclass
class GpModel:
    X: np.ndarray
    y: np.ndarray
    params: KernelParams
    chol: np.ndarray
    dual: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    jitter: float = 0.0
    degenerate: bool = False
    mll: float = float("nan")

    @property
    def dim(self) -> int:
        return self.lower.size

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * (self.upper - self.lower)

    def standardize(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std


def condition(X, y, params: KernelParams, **kw) -> GpModel:
    """Model with fixed hyperparameters on unit-cube inputs ``X`` and standardized targets ``y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    kw.setdefault("lower", np.zeros(X.shape[1]))
    kw.setdefault("upper", np.ones(X.shape[1]))
    K = kernel_matrix(X, X, params) + params.noise_variance * np.eye(X.shape[0])
    L, jitter = cholesky_with_jitter(K)
    return GpModel(X=X, y=y, params=params, chol=L, dual=cho_solve(L, y), jitter=jitter, **kw)


def fit(X, y, lower=None, upper=None, n_restarts: int = 4, max_iters: int = 50, seed: int = 0,
        init: KernelParams | None = None, noise_variance: float | None = None,
        rng: np.random.Generator | None = None) -> GpModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    ``lower``/``upper`` define the input box mapped to the unit cube (default:
    data already in the unit cube). The first restart starts from ``init`` (or
    a fixed default), the others from seeded uniform draws in the log-parameter
    box (drawn from ``rng``, or a generator seeded by ``seed``).
    ``noise_variance`` pins the noise instead of fitting it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, dim = X.shape
    if y.size != n or n < 1:
        raise ValueError("need at least one observation with matching X and y")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    lower = np.zeros(dim) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (dim,)).copy()
    upper = np.ones(dim) if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (dim,)).copy()
    U = (X - lower) / (upper - lower)
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    norm = dict(lower=lower, upper=upper, y_mean=y_mean)
    default = init or KernelParams(np.full(dim, 0.5), 1.0, noise_variance or 1e-6)

    if n == 1:
        return condition(U, np.zeros(1), KernelParams(default.lengthscales, default.signal_variance,
                                                       noise_variance or NOISE_FLOOR), y_std=1.0, **norm)
    if y_std == 0.0:
        warnings.warn("targets have zero variance; using the prior-only model", DegenerateDataWarning, stacklevel=2)
        return GpModel(X=np.zeros((0, dim)), y=np.zeros(0), params=default, chol=np.zeros((0, 0)),
                       dual=np.zeros(0), y_std=1.0, degenerate=True, **norm)

    ys = (y - y_mean) / y_std
    lo, hi = log_param_bounds(dim)
    if noise_variance is not None:
        lo[-1] = hi[-1] = math.log(max(noise_variance, NOISE_FLOOR))
        hi[-1] = np.nextafter(hi[-1], np.inf)
    rng = rng if rng is not None else make_rng(seed, 11)
    starts = [np.clip(default.to_log(), lo, hi)]
    starts += [rng.uniform(lo, hi) for _ in range(n_restarts - 1)]
    cfg = SolverConfig(max_iters=max_iters, grad_tol=1e-5)

    def neg_mll(theta):
        try:
            value, grad = log_marginal_likelihood(theta, U, ys)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(theta)
        return -value, -grad

    best = None
    for theta0 in starts:
        result, _ = minimize(neg_mll, theta0, lo, hi, cfg)
        if np.isfinite(result.f) and (best is None or result.f < best.f):
            best = result
    if best is None:
        raise np.linalg.LinAlgError("marginal likelihood could not be evaluated at any start")
    model = condition(U, ys, KernelParams.from_log(best.x), y_std=y_std, **norm)
    model.mll = -best.f
    return model


def posterior(model: GpModel, Xq, with_grad: bool = False):
    """Posterior mean and variance (standardized units) at unit-cube points ``Xq``.

    With ``with_grad`` also returns d(mean)/dx and d(var)/dx, each ``(B, D)``.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    p = model.params
    if model.X.shape[0] == 0:
        mean = np.zeros(Xq.shape[0])
        var = np.full(Xq.shape[0], p.signal_variance)
        if with_grad:
            return mean, var, np.zeros_like(Xq), np.zeros_like(Xq)
        return mean, var
    diff, sq = _scaled_sq(Xq, model.X, p.lengthscales)
    r = np.sqrt(sq)
    base, e = _matern(r)
    k = p.signal_variance * base
    mean = k @ model.dual
    v = solve_triangular(model.chol, k.T)
    raw_var = p.signal_variance - np.sum(v * v, axis=0)
    var = np.maximum(raw_var, VAR_FLOOR)
    if not with_grad:
        return mean, var
    # dk/dx_d = -sigma^2 (5/3)(1 + sqrt5 r) exp(-sqrt5 r) (x_d - z_d) / l_d^2
    dk = -(p.signal_variance * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e)[:, :, None] * diff / p.lengthscales
    dmean = np.einsum("bnd,n->bd", dk, model.dual)
    w = solve_triangular(model.chol, v, transposed=True)
    dvar = -2.0 * np.einsum("bnd,nb->bd", dk, w)
    dvar[raw_var < VAR_FLOOR] = 0.0
    return mean, var, dmean, dvar


def normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def normal_cdf(z):
    """Standard normal CDF, ``0.5 * erfc(-z / sqrt 2)``."""
    return special.ndtr(z)


def _tail_terms(z):
    """For z <= -1: Mills-type ratio m = Phi(z)/phi(z) and q = 1 + z m = h(z)/phi(z)."""
    m = math.sqrt(math.pi / 2.0) * special.erfcx(-z / math.sqrt(2.0))
    q = 1.0 + z * m
    far = z < -100.0
    if np.any(far):
        t2 = np.square(z[far])
        # 1 - t R(t) = t^-2 (1 - 3 t^-2 + 15 t^-4 - 105 t^-6), t = |z|
        q[far] = (1.0 - (3.0 - (15.0 - 105.0 / t2) / t2) / t2) / t2
    return m, q


def log_h(z):
    """log(z Phi(z) + phi(z)) and its derivative Phi(z)/h(z), stable for very negative z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    dout = np.empty_like(z)
    upper = z > -1.0
    if np.any(upper):
        zu = z[upper]
        cdf = normal_cdf(zu)
        h = zu * cdf + normal_pdf(zu)
        out[upper] = np.log(h)
        dout[upper] = cdf / h
    lower = ~upper
    if np.any(lower):
        zl = z[lower]
        m, q = _tail_terms(zl)
        out[lower] = -0.5 * zl * zl - 0.5 * LOG_2PI + np.log(q)
        dout[lower] = m / q
    return out, dout


def log_ei_moments(mean, sigma, f_best):
    """Log expected improvement below ``f_best`` for Gaussian moments (minimization)."""
    sigma = np.maximum(np.asarray(sigma, dtype=float), SIGMA_FLOOR)
    z = (f_best - np.asarray(mean, dtype=float)) / sigma
    lh, _ = log_h(z)
    return np.log(sigma) + lh


@dataclass
class AcqBatchResult:
    values: np.ndarray
    gradients: np.ndarray


def log_ei(model: GpModel, Xq, f_best: float) -> AcqBatchResult:
    """Log expected improvement and its gradient at unit-cube points ``Xq``.

    ``f_best`` is the incumbent in standardized units; improvement is
    ``max(f_best - f, 0)``.
    """
    mean, var, dmean, dvar = posterior(model, Xq, with_grad=True)
    raw_sigma = np.sqrt(var)
    sigma = np.maximum(raw_sigma, SIGMA_FLOOR)
    dsigma = np.where((raw_sigma > SIGMA_FLOOR)[:, None], dvar / (2.0 * sigma[:, None]), 0.0)
    z = (f_best - mean) / sigma
    lh, dlh = log_h(z)
    values = np.log(sigma) + lh
    # d/dx [log sigma + log h(z)] = dsigma/sigma * (1 - z Phi/h) - (Phi/h) dmean/sigma,
    # and 1 - z Phi/h = phi/h is evaluated without cancellation.
    phi_over_h = np.where(z > -1.0, 1.0 - z * dlh, 0.0)
    tail = z <= -1.0
    if np.any(tail):
        _, q = _tail_terms(z[tail])
        phi_over_h[tail] = 1.0 / q
    grads = (dsigma * phi_over_h[:, None] - dmean * dlh[:, None]) / sigma[:, None]
    return AcqBatchResult(values, grads)
