"""Bound-constrained quasi-Newton solvers with a reverse-communication interface.

A solver never calls the objective. It exposes the point it wants evaluated
(:class:`NeedEvaluation`) and advances one micro-step each time it is told the
value and gradient there. This lets a driver interleave many independent
solvers and serve all their requests with one batched evaluation per round.

Both solvers minimize. Each line-search trial is a separate request.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from msoqn.solvers.base import (
    Finished,
    NeedEvaluation,
    Phase,
    SolverConfig,
    Termination,
    Variant,
    check_bounds,
    projected_gradient,
)
from msoqn.solvers.linesearch import MoreThuente, SearchStatus

EPS = np.finfo(float).eps
CURVATURE_EPS = 1e-12
UNBOUNDED_STPMAX = 1e10



class ClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AcceptedStep:
    f_old: float
    f_new: float
    stp: float
    slope: float


class QuasiNewtonSolver:
    variant: Variant

    def __init__(self, x0, lower, upper, config: SolverConfig | None = None):
        x0 = np.array(x0, dtype=float).ravel()
        self.config = config or SolverConfig()
        self.lower, self.upper = check_bounds(x0.size, lower, upper)
        clamped = np.clip(x0, self.lower, self.upper)
        if not np.array_equal(clamped, x0):
            warnings.warn("initial point outside bounds was projected onto the box", ClampWarning, stacklevel=3)
        self.n = x0.size
        self.constrained = bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))
        self.boxed = bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

        self.x = clamped
        self.f = np.inf
        self.g = np.zeros(self.n)
        self.iter_count = 0
        self.eval_count = 0
        self.phase = Phase.AWAITING_INITIAL_EVAL
        self.reason: Termination | None = None
        self.error: str | None = None
        self.trace_f: list[float] = []
        self.trace_gnorm: list[float] = []
        self.accepted: list[AcceptedStep] = []

        self._search: MoreThuente | None = None
        self._d = np.zeros(self.n)
        self._trial = clamped.copy()
        self._trials_in_search = 0
        self.request = NeedEvaluation(self._trial.copy())

    # -- variant hooks -------------------------------------------------------

    def _direction(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Return (d, endpoint at stp=1, initial step, maximum step)."""
        raise NotImplementedError

    def _trial_point(self, stp: float) -> np.ndarray:
        raise NotImplementedError

    def _slope(self, g: np.ndarray, stp: float) -> float:
        return float(g @ self._d)

    def _update(self, s: np.ndarray, y: np.ndarray) -> None:
        raise NotImplementedError

    def _has_memory(self) -> bool:
        raise NotImplementedError

    def _reset_memory(self) -> None:
        raise NotImplementedError

    def inverse_hessian(self) -> np.ndarray:
        raise NotImplementedError

    # -- driver-facing API -----------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.phase is Phase.CONVERGED

    def projected_grad_norm(self) -> float:
        return float(np.max(np.abs(projected_gradient(self.x, self.g, self.lower, self.upper)), initial=0.0))

    def tell(self, f: float, g) -> NeedEvaluation | Finished:
        """Consume ``(f, g)`` at the last requested point and return the next request."""
        if self.phase is Phase.CONVERGED:
            raise RuntimeError("solver has already finished")
        g = np.array(g, dtype=float).ravel()
        if g.shape != (self.n,):
            raise ValueError(f"gradient has shape {g.shape}, expected ({self.n},)")
        f = float(f)
        self.eval_count += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            self.error = "non-finite objective value or gradient"
            if self.phase is Phase.AWAITING_INITIAL_EVAL:
                self.f = np.inf
            return self._finish(Termination.LINE_SEARCH_FAILED)

        if self.phase is Phase.AWAITING_INITIAL_EVAL:
            self.f, self.g = f, g
            self._record()
            if self.projected_grad_norm() <= self.config.grad_tol:
                return self._finish(Termination.GRAD_TOL)
            if self.config.max_iters == 0:
                return self._finish(Termination.MAX_ITERS)
            return self._start_iteration()

        search = self._search
        status = search.step(f, self._slope(g, search.stp))
        if status is SearchStatus.EVALUATE:
            if self._trials_in_search >= self.config.max_line_search_trials:
                return self._search_failed()
            return self._request_trial(search.stp)
        if status is SearchStatus.CONVERGED or (status is SearchStatus.WARNING and search.armijo(f)):
            return self._accept(f, g, search)
        return self._search_failed()

    # -- internals -------------------------------------------------------------

    def _record(self) -> None:
        self.trace_f.append(self.f)
        self.trace_gnorm.append(self.projected_grad_norm())

    def _finish(self, reason: Termination) -> Finished:
        self.phase = Phase.CONVERGED
        self.reason = reason
        self._search = None
        self.request = Finished(self.x.copy(), self.f, reason)
        return self.request

    def _start_iteration(self) -> NeedEvaluation | Finished:
        d, endpoint, stp, stpmax = self._direction()
        self._d, self._endpoint = d, endpoint
        slope = self._slope(self.g, 0.0)
        if not np.any(d) or not slope < 0.0:
            return self._search_failed()
        self._search = MoreThuente(self.f, slope, min(stp, stpmax), self.config.c1, self.config.c2,
                                   stpmax=stpmax)
        if self._search.status is SearchStatus.ERROR:
            return self._search_failed()
        self._trials_in_search = 0
        return self._request_trial(self._search.stp)

    def _request_trial(self, stp: float) -> NeedEvaluation:
        self._trials_in_search += 1
        self._trial = self._trial_point(stp)
        self.phase = Phase.IN_LINE_SEARCH
        self.request = NeedEvaluation(self._trial.copy())
        return self.request

    def _search_failed(self) -> NeedEvaluation | Finished:
        # Iterate, value and gradient were never overwritten; only memory is discarded.
        if self._has_memory():
            self._reset_memory()
            return self._start_iteration()
        return self._finish(Termination.LINE_SEARCH_FAILED)

    def _accept(self, f: float, g: np.ndarray, search: MoreThuente) -> NeedEvaluation | Finished:
        x_new = self._trial
        s, y = x_new - self.x, g - self.g
        f_old = self.f
        self.accepted.append(AcceptedStep(f_old, f, search.stp, search.ginit))
        self.x, self.f, self.g = x_new, f, g
        self.iter_count += 1
        if float(s @ y) > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            self._update(s, y)
        self._record()
        if self.projected_grad_norm() <= self.config.grad_tol:
            return self._finish(Termination.GRAD_TOL)
        if f_old - f <= self.config.ftol * max(abs(f_old), abs(f), 1.0):
            return self._finish(Termination.FTOL)
        if self.iter_count >= self.config.max_iters:
            return self._finish(Termination.MAX_ITERS)
        return self._start_iteration()

    def _max_feasible_step(self, d: np.ndarray) -> float:
        stpmax = UNBOUNDED_STPMAX
        with np.errstate(divide="ignore", invalid="ignore"):
            down = (d < 0) & np.isfinite(self.lower)
            up = (d > 0) & np.isfinite(self.upper)
            if np.any(down):
                stpmax = min(stpmax, float(np.min((self.lower[down] - self.x[down]) / d[down])))
            if np.any(up):
                stpmax = min(stpmax, float(np.min((self.upper[up] - self.x[up]) / d[up])))
        return max(stpmax, 0.0)


class LbfgsbSolver(QuasiNewtonSolver):
    """Limited-memory BFGS with bounds (compact representation, Cauchy point, subspace step)."""

    variant = Variant.LBFGSB

    def __init__(self, x0, lower, upper, config: SolverConfig | None = None):
        super().__init__(x0, lower, upper, config)
        self.s_hist: list[np.ndarray] = []
        self.y_hist: list[np.ndarray] = []
        self.theta = 1.0

    @property
    def gamma(self) -> float:
        return 1.0 / self.theta

    def _has_memory(self) -> bool:
        return bool(self.s_hist)

    def _reset_memory(self) -> None:
        self.s_hist.clear()
        self.y_hist.clear()
        self.theta = 1.0

    def _update(self, s, y) -> None:
        self.s_hist.append(s)
        self.y_hist.append(y)
        if len(self.s_hist) > self.config.memory:
            del self.s_hist[0], self.y_hist[0]
        self.theta = float(y @ y) / float(s @ y)

    def _compact(self):
        """W = [Y, theta S] and the middle matrix M of B = theta I - W M W^T."""
        S = np.column_stack(self.s_hist)
        Y = np.column_stack(self.y_hist)
        theta = self.theta
        SY = S.T @ Y
        k = SY.shape[0]
        middle_inv = np.empty((2 * k, 2 * k))
        L = np.tril(SY, -1)
        middle_inv[:k, :k] = -np.diag(np.diag(SY))
        middle_inv[:k, k:] = L.T
        middle_inv[k:, :k] = L
        middle_inv[k:, k:] = theta * (S.T @ S)
        W = np.hstack([Y, theta * S])
        return W, middle_inv, np.linalg.inv(middle_inv)

    def _cauchy(self, W, M):
        """Generalized Cauchy point along the projected steepest-descent path.

        Returns the point, ``c = W^T (xcp - x)`` and the mask of variables left
        free (not fixed at a bound) at the Cauchy point.
        """
        x, g, lo, hi, theta = self.x, self.g, self.lower, self.upper, self.theta
        n = self.n
        k2 = 0 if W is None else W.shape[1]
        neg = -g
        at_lower = x - lo <= 0.0
        at_upper = hi - x <= 0.0
        fixed = (at_lower & (neg <= 0.0)) | (~at_lower & at_upper & (neg >= 0.0))
        d = np.where(fixed | (neg == 0.0), 0.0, neg)
        moving = d != 0.0

        brk = np.full(n, np.inf)
        down = moving & (neg < 0.0) & np.isfinite(lo)
        up = moving & (neg > 0.0) & np.isfinite(hi)
        brk[down] = (x[down] - lo[down]) / (-neg[down])
        brk[up] = (hi[up] - x[up]) / neg[up]
        has_brk = down | up
        bounded_path = not np.any(moving & ~has_brk)

        xcp = x.copy()
        c = np.zeros(k2)
        if not np.any(moving):
            return xcp, c, ~fixed

        p = W.T @ d if k2 else np.zeros(0)
        f1 = -float(d @ d)
        f2 = -theta * f1
        f2_org = f2
        if k2:
            f2 -= float(p @ (M @ p))
        dtm = -f1 / f2
        tsum = 0.0
        order = np.flatnonzero(has_brk)
        order = order[np.argsort(brk[order], kind="stable")]
        nbreak = order.size
        tj = 0.0
        hit_all = False
        for count, ibp in enumerate(order, start=1):
            tj0, tj = tj, brk[ibp]
            dt = tj - tj0
            if dtm < dt:
                break
            tsum += dt
            dibp = d[ibp]
            d[ibp] = 0.0
            if dibp > 0.0:
                zibp = hi[ibp] - x[ibp]
                xcp[ibp] = hi[ibp]
            else:
                zibp = lo[ibp] - x[ibp]
                xcp[ibp] = lo[ibp]
            fixed[ibp] = True
            nleft = nbreak - count
            if nleft == 0 and nbreak == n:
                dtm = dt
                hit_all = True
                break
            dibp2 = dibp * dibp
            f1 = f1 + dt * f2 + dibp2 - theta * dibp * zibp
            f2 = f2 - theta * dibp2
            if k2:
                c += dt * p
                wbp = W[ibp]
                v = M @ wbp
                wmc, wmp, wmw = float(c @ v), float(p @ v), float(wbp @ v)
                p = p - dibp * wbp
                f1 += dibp * wmc
                f2 += 2.0 * dibp * wmp - dibp2 * wmw
            f2 = max(EPS * f2_org, f2)
            if nleft > 0:
                dtm = -f1 / f2
            elif bounded_path:
                dtm = 0.0
            else:
                dtm = -f1 / f2
        if not hit_all:
            dtm = max(dtm, 0.0)
            tsum += dtm
            xcp += tsum * d
        if k2:
            c += dtm * p
        return np.clip(xcp, lo, hi), c, ~fixed

    def _subspace(self, xcp, c, free, W, middle_inv, M) -> np.ndarray:
        """Minimize the quadratic model over the free variables, then project."""
        theta = self.theta
        Z = np.flatnonzero(free)
        WZ = W[Z]
        r = self.g[Z] + theta * (xcp[Z] - self.x[Z]) - WZ @ (M @ c)
        K = middle_inv - (WZ.T @ WZ) / theta
        try:
            v = np.linalg.solve(K, WZ.T @ r)
        except np.linalg.LinAlgError:
            return xcp
        du = -r / theta - (WZ @ v) / theta**2

        z = xcp.copy()
        z[Z] = np.clip(xcp[Z] + du, self.lower[Z], self.upper[Z])
        hit = np.any((z[Z] == self.lower[Z]) | (z[Z] == self.upper[Z]))
        if not hit or float((z - self.x) @ self.g) <= 0.0:
            return z
        # Projection gave an ascent direction: fall back to the longest feasible step along du.
        alpha, ibd = 1.0, -1
        for i, (k, dk) in enumerate(zip(Z, du)):
            if dk < 0.0 and np.isfinite(self.lower[k]):
                gap = self.lower[k] - xcp[k]
                t = 0.0 if gap >= 0.0 else (gap / dk if dk * alpha < gap else alpha)
            elif dk > 0.0 and np.isfinite(self.upper[k]):
                gap = self.upper[k] - xcp[k]
                t = 0.0 if gap <= 0.0 else (gap / dk if dk * alpha > gap else alpha)
            else:
                continue
            if t < alpha:
                alpha, ibd = t, i
        z = xcp.copy()
        if alpha < 1.0:
            k = Z[ibd]
            z[k] = self.upper[k] if du[ibd] > 0.0 else self.lower[k]
            du = du.copy()
            du[ibd] = 0.0
        z[Z] += alpha * du
        return np.clip(z, self.lower, self.upper)

    def _direction(self):
        if self.s_hist:
            W, middle_inv, M = self._compact()
        else:
            W = middle_inv = M = None
        if not self.constrained and W is not None:
            xcp, c, free = self.x.copy(), np.zeros(W.shape[1]), np.ones(self.n, dtype=bool)
        else:
            xcp, c, free = self._cauchy(W, M)
        if W is not None and np.any(free):
            z = self._subspace(xcp, c, free, W, middle_inv, M)
        else:
            z = xcp
        d = z - self.x
        if self.constrained:
            stpmax = 1.0 if self.iter_count == 0 else self._max_feasible_step(d)
        else:
            stpmax = UNBOUNDED_STPMAX
        dnorm = float(np.linalg.norm(d))
        if self.iter_count == 0 and not self.boxed and dnorm > 0.0:
            stp = min(1.0 / dnorm, stpmax)
        else:
            stp = 1.0
        return d, z, stp, stpmax

    def _trial_point(self, stp: float) -> np.ndarray:
        if stp == 1.0:
            return self._endpoint.copy()
        return np.clip(self.x + stp * self._d, self.lower, self.upper)

    def two_loop(self, v: np.ndarray) -> np.ndarray:
        """Apply the limited-memory inverse Hessian to ``v`` (vector or columns)."""
        q = np.array(v, dtype=float)
        alphas = []
        for s, y in zip(reversed(self.s_hist), reversed(self.y_hist)):
            rho = 1.0 / float(s @ y)
            a = rho * (s @ q)
            q = q - np.multiply.outer(y, a)
            alphas.append((rho, a))
        r = self.gamma * q
        for (s, y), (rho, a) in zip(zip(self.s_hist, self.y_hist), reversed(alphas)):
            b = rho * (y @ r)
            r = r + np.multiply.outer(s, a - b)
        return r

    def inverse_hessian(self) -> np.ndarray:
        return self.two_loop(np.eye(self.n))


class DenseBfgsSolver(QuasiNewtonSolver):
    """Full-matrix BFGS; bounds handled by projecting trial points onto the box."""

    variant = Variant.DENSE_BFGS

    def __init__(self, x0, lower, upper, config: SolverConfig | None = None):
        super().__init__(x0, lower, upper, config)
        self.H = np.eye(self.n)
        self.n_updates = 0

    def _has_memory(self) -> bool:
        return self.n_updates > 0

    def _reset_memory(self) -> None:
        self.H = np.eye(self.n)
        self.n_updates = 0

    def _update(self, s, y) -> None:
        sy = float(s @ y)
        if self.n_updates == 0:
            self.H = (sy / float(y @ y)) * np.eye(self.n)
        rho = 1.0 / sy
        Hy = self.H @ y
        # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
        self.H = (self.H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                  + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s))
        self.H = 0.5 * (self.H + self.H.T)
        self.n_updates += 1

    def _outward(self, d: np.ndarray) -> np.ndarray:
        return ((self.x <= self.lower) & (d < 0)) | ((self.x >= self.upper) & (d > 0))

    def _direction(self):
        d = -(self.H @ self.g)
        d[self._outward(d)] = 0.0
        if not float(self.g @ d) < 0.0:
            d = projected_gradient(self.x, self.g, self.lower, self.upper)
        dnorm = float(np.linalg.norm(d))
        stp = min(1.0, 1.0 / dnorm) if self.iter_count == 0 and dnorm > 0.0 else 1.0
        return d, None, stp, UNBOUNDED_STPMAX

    def _trial_point(self, stp: float) -> np.ndarray:
        return np.clip(self.x + stp * self._d, self.lower, self.upper)

    def _slope(self, g, stp) -> float:
        if stp == 0.0:
            return float(g @ self._d)
        raw = self.x + stp * self._d
        inside = (raw > self.lower) & (raw < self.upper)
        return float(g[inside] @ self._d[inside])

    def inverse_hessian(self) -> np.ndarray:
        return self.H.copy()


def solver_new(x0, lower, upper, config: SolverConfig | None = None,
               variant: Variant | str = Variant.LBFGSB) -> tuple[QuasiNewtonSolver, NeedEvaluation]:
    cls = LbfgsbSolver if Variant.parse(variant) is Variant.LBFGSB else DenseBfgsSolver
    solver = cls(x0, lower, upper, config)
    return solver, solver.request


def solver_step(solver: QuasiNewtonSolver, f: float, g) -> NeedEvaluation | Finished:
    return solver.tell(f, g)


def approx_inverse_hessian(solver: QuasiNewtonSolver) -> np.ndarray:
    return solver.inverse_hessian()


def minimize(fun, x0, lower, upper, config: SolverConfig | None = None,
             variant: Variant | str = Variant.LBFGSB) -> tuple[Finished, QuasiNewtonSolver]:
    """Drive one solver to completion; ``fun(x)`` returns ``(value, gradient)``."""
    solver, req = solver_new(x0, lower, upper, config, variant)
    while isinstance(req, NeedEvaluation):
        f, g = fun(req.x)
        req = solver.tell(f, g)
    return req, solver
