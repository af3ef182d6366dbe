"""Acceptance suite: seven end-to-end criteria, each reporting one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python3 tests/test_acceptance.py``).
Seeds are fixed up front; nothing here is tuned per run.
"""

import math
import statistics
import time

import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from conftest import central_diff, five_point_diff, rel_err
from msoqn.bo import BoConfig, log_ei_batch_objective, run_bo
from msoqn.diagnostics import artifact_experiment
from msoqn.experiments import TARGET, convergence_experiment, default_convergence_reps
from msoqn.gp import KernelParams, condition, fit, log_ei, log_ei_moments, log_marginal_likelihood, posterior
from msoqn.mso import BatchObjective, run_dbe, run_seq
from msoqn.numerics import cholesky, frobenius_norm, make_rng
from msoqn.objectives import evaluate, make_objective
from msoqn.solvers import SolverConfig, minimize
from problems import oracle_problems

SEED = 0
RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def report(request):
    terminal = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(name, ok, detail):
        RESULTS[name] = (ok, detail)
        line = f"[{name}] {'PASS' if ok else 'FAIL'}: {detail}"
        if terminal is not None:
            terminal.write_line("")
            terminal.write_line(line)
        else:
            print(line)
        assert ok, line
    return emit


# -- 1 ---------------------------------------------------------------------------


def test_c1_convergence_vs_restarts(report):
    t0 = time.perf_counter()
    windows = {1: (20, 45), 2: (35, 75), 5: (120, math.inf), 10: (120, math.inf)}
    medians, ok = {}, True
    for b, (lo, hi) in windows.items():
        res = convergence_experiment(b, default_convergence_reps(b, 200), seed=SEED)
        med = float(np.median(res.hit_iterations(TARGET)))
        medians[b] = med
        ok &= (lo <= med <= hi) if b <= 2 else med > lo
    ok &= medians[1] < medians[2] < medians[5] < medians[10]
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"B={b}: {m:g}" for b, m in medians.items())
    report("C1 convergence-vs-B", ok and elapsed < 300,
           f"median iterations to mean objective <= 1e-12: {detail} "
           f"(windows B=1 [20,45], B=2 [35,75], B=5,10 > 120; strictly increasing) in {elapsed:.0f}s")


# -- 2 ---------------------------------------------------------------------------


def test_c2_off_diagonal_artifacts(report):
    t0 = time.perf_counter()
    obj = make_objective("rosenbrock", 5)
    lines, ok = [], True
    for variant, b in [("lbfgsb", 3), ("bfgs", 3), ("bfgs", 10)]:
        r = artifact_experiment(obj, b, variant=variant, seed=SEED)
        case_ok = r.offdiag_ratio_seq == 0.0 and r.offdiag_ratio_cbe > 0.01 and r.e_rel_seq < r.e_rel_cbe
        ok &= case_ok
        lines.append(f"{variant} B={b}: offdiag seq={r.offdiag_ratio_seq:g} cbe={r.offdiag_ratio_cbe:.3f}, "
                     f"e_rel seq={r.e_rel_seq:.3f} cbe={r.e_rel_cbe:.3f}")
    elapsed = time.perf_counter() - t0
    report("C2 off-diagonal artifacts", ok and elapsed < 60, "; ".join(lines) + f" in {elapsed:.1f}s")


# -- 3 ---------------------------------------------------------------------------


def equivalence_problems():
    """Five synthetic objectives and five GP-LogEI acquisitions, all maximized."""
    problems = []
    for k, name in enumerate(["rosenbrock", "rastrigin", "sphere", "attractive_sector", "rastrigin"]):
        dim = 3 + k % 3
        obj = make_objective(name, dim, seed=None if name == "rosenbrock" else 100 + k)

        def fun(x, obj=obj):
            out = evaluate(obj, x, want_grad=True)
            return -out.value, -out.gradient
        problems.append((f"{name} D={dim}", lambda fun=fun: BatchObjective.from_pointwise(fun, deterministic=True),
                         obj.lower, obj.upper, SolverConfig()))
    for k in range(5):
        g = make_rng(SEED, 3, k)
        dim = 2 + k
        obj = make_objective("rastrigin", dim, seed=200 + k)
        X = g.uniform(obj.lower, obj.upper, size=(10 + 4 * k, dim))
        y = np.array([evaluate(obj, x).value for x in X])
        model = fit(X, y, obj.lower, obj.upper, seed=k)
        f_best = float(np.min(model.y))
        problems.append((f"GP-LogEI D={dim}", lambda m=model, f=f_best: log_ei_batch_objective(m, f, True),
                         obj.lower, obj.upper, SolverConfig(memory=10, max_iters=200, grad_tol=1e-2)))
    return problems


def test_c3_dbe_equals_seq(report):
    t0 = time.perf_counter()
    ok, worst, mismatched = True, 0.0, []
    for k, (label, make_acq, lower, upper, cfg) in enumerate(equivalence_problems()):
        starts = make_rng(SEED, 33, k).uniform(lower, upper, size=(10, lower.size))
        seq = run_seq(make_acq(), starts, lower, upper, cfg)
        dbe = run_dbe(make_acq(), starts, lower, upper, cfg)
        dev = max(float(np.max(np.abs(a.x_final - b.x_final))) for a, b in zip(seq.per_restart, dbe.per_restart))
        worst = max(worst, dev)
        if dev > 1e-10 or seq.iterations != dbe.iterations:
            ok = False
            mismatched.append(label)
    elapsed = time.perf_counter() - t0
    report("C3 D-BE == Seq", ok and elapsed < 120,
           f"10 problems x 10 restarts: max final-point deviation {worst:.1e} (tol 1e-10), "
           f"iteration counts {'identical' if not mismatched else 'differ on ' + ', '.join(mismatched)} "
           f"in {elapsed:.1f}s")


# -- 4 ---------------------------------------------------------------------------


def test_c4_bo_benchmark_trend(report):
    t0 = time.perf_counter()
    iters, acq = {}, {}
    for scheme in ("seq", "cbe", "dbe"):
        traces = [run_bo(BoConfig("rastrigin", 5, n_trials=60, n_init=10, restarts=10, scheme=scheme, seed=s))
                  for s in range(5)]
        iters[scheme] = statistics.median(t.median_iters for t in traces)
        acq[scheme] = statistics.median(t.acq_time for t in traces)
    elapsed = time.perf_counter() - t0
    ok = (iters["cbe"] >= 2 * iters["dbe"]
          and abs(iters["dbe"] - iters["seq"]) <= 0.2 * iters["seq"]
          and acq["dbe"] < acq["seq"]
          and elapsed < 1800)
    report("C4 BO benchmark trend", ok,
           f"median Iters seq={iters['seq']:g} cbe={iters['cbe']:g} dbe={iters['dbe']:g} "
           f"(need cbe >= 2 dbe, |dbe-seq| <= 20% seq); median acquisition time "
           f"seq={acq['seq']:.2f}s cbe={acq['cbe']:.2f}s dbe={acq['dbe']:.2f}s (need dbe < seq) in {elapsed:.0f}s")


# -- 5 ---------------------------------------------------------------------------


def test_c5_solver_oracle(report):
    t0 = time.perf_counter()
    cfg = SolverConfig(max_iters=1000, grad_tol=1e-5)
    worst_abs, failures, n_active = 0.0, 0, 0
    for fun, x0, lower, upper, bounded in oracle_problems():
        ref = scipy_minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lower, upper)),
                             options=dict(maxcor=cfg.memory, gtol=cfg.grad_tol, ftol=cfg.ftol, maxiter=cfg.max_iters))
        final, _ = minimize(fun, x0, lower, upper, cfg)
        diff = abs(final.f - ref.fun)
        worst_abs = max(worst_abs, diff)
        failures += diff > max(1e-6, 1e-8 * abs(ref.fun))
        n_active += bool(bounded and np.any((final.x == lower) | (final.x == upper)))
    elapsed = time.perf_counter() - t0
    report("C5 solver oracle", failures == 0 and n_active == 10 and elapsed < 60,
           f"20 problems ({n_active} with active bounds) vs reference L-BFGS-B: {20 - failures}/20 within "
           f"max(1e-6, 1e-8 rel); worst |df| = {worst_abs:.1e} in {elapsed:.1f}s")


# -- 6 ---------------------------------------------------------------------------


def numerical_checks():
    """Each entry: (name, worst observed error, tolerance)."""
    out = []
    g = make_rng(SEED, 6)

    worst = 0.0
    for name in ["rosenbrock", "sphere", "rastrigin", "attractive_sector"]:
        obj = make_objective(name, 5, seed=None if name == "rosenbrock" else 1)
        margin = 1e-3 * (obj.upper - obj.lower)
        for x in g.uniform(obj.lower + margin, obj.upper - margin, size=(100, 5)):
            fd = central_diff(lambda v: evaluate(obj, v).value, x)
            worst = max(worst, rel_err(evaluate(obj, x, want_grad=True).gradient, fd))
    out.append(("objective gradients", worst, 1e-5))

    worst = 0.0
    for name in ["rosenbrock", "sphere"]:
        obj = make_objective(name, 4, seed=None if name == "rosenbrock" else 1)
        for x in g.uniform(obj.lower, obj.upper, size=(20, 4)):
            fd = np.array([central_diff(lambda v: evaluate(obj, v, want_grad=True).gradient[j], x, 1e-5)
                           for j in range(4)])
            worst = max(worst, rel_err(evaluate(obj, x, want_hess=True).hessian, fd))
    out.append(("objective Hessians", worst, 1e-4))

    worst = 0.0
    for _ in range(20):
        n, dim = int(g.integers(3, 21)), int(g.integers(1, 6))
        X, y = g.random((n, dim)), g.normal(size=n)
        theta = np.concatenate([g.uniform(np.log(0.05), np.log(3.0), size=dim),
                                [g.uniform(np.log(1e-3), np.log(1e3)), g.uniform(np.log(1e-4), 0.0)]])
        fd = central_diff(lambda t: log_marginal_likelihood(t, X, y, with_grad=False), theta)
        worst = max(worst, rel_err(log_marginal_likelihood(theta, X, y)[1], fd))
    out.append(("MLL gradients", worst, 1e-5))

    models = []
    for k in range(10):
        dim = 2 + k % 3
        X = g.random((8 + k, dim))
        y = np.sin(3 * X).sum(axis=1)
        y = (y - y.mean()) / y.std()
        models.append(condition(X, y, KernelParams(g.uniform(0.2, 1.0, size=dim), g.uniform(0.5, 2.0), 1e-6)))

    worst = 0.0
    for model in models[:5]:
        for x in g.random((10, model.dim)):
            _, _, dmean, dvar = posterior(model, x[None], with_grad=True)
            fd_mean = central_diff(lambda v: posterior(model, v[None])[0][0], x)
            fd_var = five_point_diff(lambda v: posterior(model, v[None])[1][0], x)
            worst = max(worst, rel_err(dmean[0], fd_mean), rel_err(dvar[0], fd_var))
    out.append(("posterior gradients", worst, 1e-5))

    worst, deepest = 0.0, 0.0
    for model in models:
        Xq = g.random((20, model.dim))
        mean, var = posterior(model, Xq)
        z_target = np.concatenate([g.uniform(-30, -10, size=10), g.uniform(-3, 3, size=10)])
        for x, mu, sd, z in zip(Xq, mean, np.sqrt(var), z_target):
            f_best = float(mu + z * sd)
            fd = central_diff(lambda v: log_ei(model, v[None], f_best).values[0], x, 1e-6)
            worst = max(worst, rel_err(log_ei(model, x[None], f_best).gradients[0], fd))
            deepest = min(deepest, z)
    out.append((f"log-EI gradients (200 points, z down to {deepest:.1f})", worst, 1e-4))

    worst = 0.0
    for n in range(1, 40, 3):
        m = g.normal(size=(n, n))
        a = m.T @ m + np.eye(n)
        L = cholesky(a)
        worst = max(worst, frobenius_norm(L @ L.T - a) / frobenius_norm(a))
    out.append(("Cholesky reconstruction", worst, 1e-9))

    worst = 0.0
    for z in [-3.0, -1.0, 0.0, 1.0, 3.0]:
        for sigma in [0.1, 1.0]:
            samples = g.normal(0.0, sigma, size=1_000_000)
            imp = np.maximum(z * sigma - samples, 0.0)
            se = imp.std(ddof=1) / 1e3
            worst = max(worst, abs(math.exp(float(log_ei_moments(0.0, sigma, z * sigma))) - imp.mean()) / se)
    out.append(("log-EI vs Monte Carlo (standard errors)", worst, 3.0))

    z = np.linspace(-40.0, 5.0, 4501)
    values = log_ei_moments(-z, 1.0, 0.0)
    finite_monotone = bool(np.all(np.isfinite(values)) and np.all(np.diff(values) > 0))
    out.append(("log-EI finite and increasing on z in [-40, 5]", 0.0 if finite_monotone else 1.0, 0.5))
    return out


def test_c6_numerical_properties(report):
    t0 = time.perf_counter()
    checks = numerical_checks()
    elapsed = time.perf_counter() - t0
    failed = [name for name, err, tol in checks if not err <= tol]
    detail = "; ".join(f"{name}: {err:.1e} <= {tol:g}" for name, err, tol in checks)
    report("C6 numerical properties", not failed and elapsed < 120,
           f"{len(checks) - len(failed)}/{len(checks)} checks ({detail}) in {elapsed:.1f}s")


# -- 7 ---------------------------------------------------------------------------


def test_c7_batched_throughput(report):
    g = make_rng(SEED, 7)
    n, dim = 200, 20
    X, y = g.random((n, dim)), g.normal(size=n)
    model = condition(X, (y - y.mean()) / y.std(), KernelParams(np.full(dim, 0.8), 1.0, 1e-4))
    Q = g.random((10, dim))
    f_best = float(np.min(model.y))
    batched, single = [], []
    for _ in range(100):
        t = time.perf_counter()
        log_ei(model, Q, f_best)
        batched.append(time.perf_counter() - t)
        t = time.perf_counter()
        for q in Q:
            log_ei(model, q[None], f_best)
        single.append(time.perf_counter() - t)
    ratio = statistics.median(batched) / statistics.median(single)
    report("C7 batched throughput", ratio < 0.8,
           f"n=200, D=20, B=10: median batched {1e3 * statistics.median(batched):.2f} ms vs "
           f"10 single calls {1e3 * statistics.median(single):.2f} ms, ratio {ratio:.2f} (need < 0.8)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
