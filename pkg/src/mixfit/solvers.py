"""First-order Riemannian maximizers.

Steepest ascent, nonlinear conjugate gradient (Hestenes-Stiefel+) and
limited-memory BFGS, all with Armijo backtracking.  The solvers work on any
:class:`~mixfit.manifolds.Manifold` and only need the objective and its
ambient gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import MixfitError

__all__ = ["SolverSettings", "SolverResult", "maximize", "METHODS"]

METHODS = ("rsd", "rcg", "rlbfgs")


@dataclass
class SolverSettings:
    max_iters: int = 1000
    tol_grad: float = 1e-6
    tol_rel: float = 1e-8
    memory: int = 10
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50
    curvature_eps: float = 1e-12
    # Fit a parabola through f(0), f'(0), f(t) to pick the next trial step.
    interpolate: bool = True
    # Fixed-step ascent (rsd only): step(t) replaces the line search.
    fixed_step: object = None


@dataclass
class SolverResult:
    x: object
    f: float
    trace: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    iters: int = 0
    reason: str = "max_iters"
    converged: bool = False
    accepted: list = field(default_factory=list)


def _safe_eval(cost, manifold, x, d, t):
    try:
        x_new = manifold.retract(x, d, t)
        f_new = cost(x_new)
    except (MixfitError, np.linalg.LinAlgError, FloatingPointError, ValueError):
        return None, -np.inf
    if not np.isfinite(f_new):
        return x_new, -np.inf
    return x_new, float(f_new)


def _parabola_peak(f, slope, t, f_t):
    """Maximizer of the quadratic through ``f``, ``slope`` at 0 and ``f_t`` at ``t``."""
    curv = (f_t - f - slope * t) / (t * t)
    if not np.isfinite(curv) or curv >= 0:
        return None
    return -slope / (2.0 * curv)


def _armijo(cost, manifold, x, f, d, slope, t0, s):
    t = t0
    for _ in range(s.max_backtracks + 1):
        x_new, f_new = _safe_eval(cost, manifold, x, d, t)
        tq = _parabola_peak(f, slope, t, f_new) if s.interpolate and np.isfinite(f_new) else None
        if f_new - f >= s.c1 * t * slope:
            # one extra trial at the interpolated peak when it is clearly elsewhere
            if tq is not None and 1e-3 * t < abs(tq - t) and tq < 10.0 * t:
                xq, fq = _safe_eval(cost, manifold, x, d, tq)
                if fq > f_new and fq - f >= s.c1 * tq * slope:
                    return tq, xq, fq
            return t, x_new, f_new
        if tq is not None:
            # safeguarded interpolation keeps the cut within [0.1, 0.5] of t
            t = min(max(tq, 0.1 * t), s.backtrack * t)
        else:
            t *= s.backtrack
    return None, None, None


def _two_loop(manifold, x, g, memory):
    q = g
    alphas = []
    for s_vec, y_vec, rho in reversed(memory):
        a = rho * manifold.inner(x, s_vec, q)
        alphas.append(a)
        q = manifold.lincomb(x, 1.0, q, -a, y_vec)
    s_vec, y_vec, _ = memory[-1]
    gamma = manifold.inner(x, s_vec, y_vec) / manifold.inner(x, y_vec, y_vec)
    r = manifold.lincomb(x, gamma, q)
    for (s_vec, y_vec, rho), a in zip(memory, reversed(alphas)):
        b = rho * manifold.inner(x, y_vec, r)
        r = manifold.lincomb(x, 1.0, r, a - b, s_vec)
    return r


def maximize(manifold, cost, egrad, x0, method="rlbfgs", settings=None, callback=None):
    """Maximize ``cost`` over ``manifold`` starting from ``x0``.

    Parameters
    ----------
    cost : callable
        ``cost(x) -> float``.
    egrad : callable
        ``egrad(x)`` returns the ambient gradient of ``cost`` at ``x``.
    method : {"rsd", "rcg", "rlbfgs"}
    callback : callable, optional
        ``callback(iteration, x, f)`` after every accepted step; a truthy
        return value stops the run with reason ``"callback"``.

    Returns
    -------
    SolverResult
        ``trace[i]`` is the objective after iteration ``i + 1``.  On a
        line-search failure the best iterate so far is returned.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    s = settings or SolverSettings()
    if s.fixed_step is not None and method != "rsd":
        raise ValueError("fixed_step is only supported by rsd")

    def rgrad(x):
        return manifold.egrad_to_rgrad(x, egrad(x))

    x = x0
    f = float(cost(x))
    g = rgrad(x)
    gnorm = manifold.norm(x, g)
    res = SolverResult(x=x, f=f)
    if gnorm < s.tol_grad:
        res.reason, res.converged = "tol_grad", True
        return res

    memory = []
    d_prev = None
    step_prev = None
    for it in range(1, s.max_iters + 1):
        if method == "rlbfgs" and memory:
            d = _two_loop(manifold, x, g, memory)
        elif method == "rcg" and d_prev is not None:
            d = d_prev
        else:
            d = g
        slope = manifold.inner(x, g, d)
        if not slope > 0:
            memory.clear()
            d = g
            slope = gnorm * gnorm

        if s.fixed_step is not None:
            t = float(s.fixed_step(it - 1))
            x_new, f_new = _safe_eval(cost, manifold, x, d, t)
            if not np.isfinite(f_new):
                res.reason = "line_search"
                break
        else:
            if method == "rlbfgs" and memory:
                t0 = 1.0
            elif step_prev is None:
                t0 = 1.0 / gnorm
            else:
                t0 = 2.0 * step_prev
            t, x_new, f_new = _armijo(cost, manifold, x, f, d, slope, t0, s)
            if t is None and d is not g:
                # restart along the gradient before giving up
                memory.clear()
                d_prev = None
                d, slope = g, gnorm * gnorm
                t, x_new, f_new = _armijo(cost, manifold, x, f, d, slope, 1.0 / gnorm, s)
            if t is None:
                res.reason = "line_search"
                break
            step_prev = t
        res.accepted.append((f, t, slope, f_new))

        g_new = rgrad(x_new)
        gnorm_new = manifold.norm(x_new, g_new)
        g_moved = manifold.transport(x, x_new, g)

        if method == "rlbfgs":
            s_vec = manifold.transport(x, x_new, manifold.lincomb(x, t, d))
            y_vec = manifold.lincomb(x_new, 1.0, g_moved, -1.0, g_new)
            sy = manifold.inner(x_new, s_vec, y_vec)
            ny = manifold.norm(x_new, y_vec)
            ns = manifold.norm(x_new, s_vec)
            memory = [
                (manifold.transport(x, x_new, sv), manifold.transport(x, x_new, yv), rho)
                for sv, yv, rho in memory
            ]
            if sy > s.curvature_eps * ns * ny and sy > 0:
                memory.append((s_vec, y_vec, 1.0 / sy))
                if len(memory) > s.memory:
                    memory.pop(0)
        elif method == "rcg":
            d_moved = manifold.transport(x, x_new, d)
            diff = manifold.lincomb(x_new, 1.0, g_new, -1.0, g_moved)
            den = -manifold.inner(x_new, d_moved, diff)
            beta = manifold.inner(x_new, g_new, diff) / den if den != 0 else 0.0
            beta = max(0.0, beta)
            d_prev = manifold.lincomb(x_new, 1.0, g_new, beta, d_moved)

        rel = abs(f_new - f) <= s.tol_rel * abs(f)
        x, f, g, gnorm = x_new, f_new, g_new, gnorm_new
        res.x, res.f, res.iters = x, f, it
        res.trace.append(f)
        res.grad_norms.append(gnorm)
        if callback is not None and callback(it, x, f):
            res.reason = "callback"
            break
        if gnorm < s.tol_grad:
            res.reason, res.converged = "tol_grad", True
            break
        if rel:
            res.reason, res.converged = "tol_ll", True
            break
    return res
