"""Seeded test problems shared by the solver tests and the acceptance suite."""

import numpy as np

from msoqn.objectives import evaluate, make_objective


def rosen(x):
    out = evaluate(make_objective("rosenbrock", x.size), x, want_grad=True)
    return out.value, out.gradient


def oracle_problems():
    """20 seeded problems: 10 unconstrained, 10 with bounds active at the solution."""
    problems = []
    for k in range(20):
        g = np.random.default_rng(1000 + k)
        n = int(g.integers(2, 9))
        bounded = k % 2 == 1
        if k % 4 < 2:
            fun = rosen
            x0 = g.uniform(-2, 2, size=n)
            lower, upper = (np.full(n, 1.2), np.full(n, 3.0)) if bounded else (np.full(n, -np.inf), np.full(n, np.inf))
            if bounded:
                x0 = g.uniform(1.2, 3.0, size=n)
        else:
            m = g.normal(size=(n, n))
            A = m @ m.T + 0.05 * np.eye(n)
            c = g.uniform(-3, 3, size=n)
            fun = (lambda A, c: lambda x: (0.5 * float((x - c) @ A @ (x - c)) + float(np.sum(np.cos(x))),
                                          A @ (x - c) - np.sin(x)))(A, c)
            lower, upper = (np.full(n, -1.0), np.full(n, 1.0)) if bounded else (np.full(n, -np.inf), np.full(n, np.inf))
            x0 = g.uniform(-1, 1, size=n)
        problems.append((fun, x0, lower, upper, bounded))
    return problems
