import numpy as np
import pytest

from mixfit.manifolds import SPD, Euclidean
from mixfit.solvers import SolverSettings, maximize


def _quadratic(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(np.linspace(1.0, cond, n)) @ q.T
    b = rng.standard_normal(n)

    def cost(x):
        return float(-0.5 * x @ a @ x + b @ x)

    def egrad(x):
        return b - a @ x

    return cost, egrad, np.linalg.solve(a, b)


@pytest.mark.parametrize("n", [2, 5, 10])
def test_lbfgs_quadratic_iteration_budget(rng, n):
    cost, egrad, xstar = _quadratic(rng, n)
    res = maximize(Euclidean(n), cost, egrad, np.zeros(n), "rlbfgs",
                   SolverSettings(max_iters=200, tol_grad=1e-6, tol_rel=0.0, memory=n + 5))
    assert res.reason == "tol_grad"
    assert res.iters <= n + 5
    np.testing.assert_allclose(res.x, xstar, atol=1e-5)


@pytest.mark.parametrize("method", ["rsd", "rcg", "rlbfgs"])
def test_armijo_contract(rng, method):
    cost, egrad, _ = _quadratic(rng, 6, cond=50.0)
    s = SolverSettings(max_iters=100, tol_rel=0.0)
    res = maximize(Euclidean(6), cost, egrad, rng.standard_normal(6), method, s)
    assert res.accepted
    for f, t, slope, f_new in res.accepted:
        assert slope > 0
        assert f_new >= f + s.c1 * t * slope


@pytest.mark.parametrize("method", ["rsd", "rcg", "rlbfgs"])
def test_spd_target(rng, method):
    # maximize -dist-like objective log det X - tr(A^{-1} X); optimum X = A
    a = rng.standard_normal((3, 3))
    target = a @ a.T + np.eye(3)
    tinv = np.linalg.inv(target)
    man = SPD(3)

    def cost(x):
        return float(np.linalg.slogdet(x)[1] - np.trace(tinv @ x))

    def egrad(x):
        return np.linalg.inv(x) - tinv

    res = maximize(man, cost, egrad, np.eye(3), method, SolverSettings(max_iters=2000, tol_rel=0.0))
    assert res.converged
    np.testing.assert_allclose(res.x, target, rtol=1e-5, atol=1e-5)
    for f_prev, f_next in zip([cost(np.eye(3))] + res.trace, res.trace):
        assert f_next >= f_prev


def test_curvature_safeguard_rejects_nonconvex_pairs(rng):
    # along a concave-up direction y^T s < 0; such pairs must not enter memory
    seen = []

    def cost(x):
        return float(-np.sum(x ** 4) / 4 + np.sum(x ** 2))

    def egrad(x):
        return -x ** 3 + 2 * x

    from mixfit import solvers

    orig = solvers._two_loop

    def spy(manifold, x, g, memory):
        seen.extend(manifold.inner(x, s, y) for s, y, _ in memory)
        return orig(manifold, x, g, memory)

    solvers._two_loop = spy
    try:
        res = maximize(Euclidean(4), cost, egrad, np.full(4, 0.05), "rlbfgs", SolverSettings(max_iters=100))
    finally:
        solvers._two_loop = orig
    assert res.converged
    np.testing.assert_allclose(np.abs(res.x), np.sqrt(2), rtol=1e-5)
    assert seen and all(v > 0 for v in seen)


def test_stationary_start():
    res = maximize(Euclidean(2), lambda x: -float(x @ x), lambda x: -2 * x, np.zeros(2), "rlbfgs")
    assert res.iters == 0 and res.reason == "tol_grad"


def test_line_search_failure_keeps_best():
    # gradient points the wrong way: no step can satisfy Armijo
    res = maximize(Euclidean(1), lambda x: -float(x[0] ** 2), lambda x: 2 * x, np.array([1.0]), "rsd")
    assert res.reason == "line_search"
    assert res.f == -1.0


def test_unknown_method():
    with pytest.raises(ValueError):
        maximize(Euclidean(1), lambda x: 0.0, lambda x: x, np.zeros(1), "newton")
