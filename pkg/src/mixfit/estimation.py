"""Estimators for mixture parameters.

``fit`` dispatches on ``FitOptions.solver``:

* ``em``     - expectation-maximization (closed-form M-step when the
               component family has one, a Riemannian LBFGS M-step otherwise)
* ``rsd``, ``rcg``, ``rlbfgs`` - Riemannian first-order optimization over
               the full mixture manifold
* ``sgd``    - mini-batch Riemannian stochastic gradient ascent

A positive ``validation_fraction`` wraps any of these in early stopping.
Objectives are totals in nats.  With ``penalize`` set the training
objective adds the Normal-inverse-Wishart log-prior of every component.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import DataBatch, GaussianParams, as_batch
from .errors import ConfigurationError, InsufficientDataError, MixfitError
from .mixture import MixtureParams
from .solvers import SolverSettings, maximize

__all__ = [
    "SOLVERS",
    "StepSchedule",
    "FitOptions",
    "FitReport",
    "Objective",
    "initialize",
    "fit",
    "fit_em",
    "fit_riemannian",
    "fit_sgd",
    "early_stopping_wrap",
]

SOLVERS = ("em", "rsd", "rcg", "rlbfgs", "sgd")
EMPTY_COMPONENT = 1e-8


@dataclass(frozen=True)
class StepSchedule:
    """Step size ``c`` (constant) or ``c / (1 + t / tau)`` (decay)."""

    c: float = 1e-3
    tau: float = None

    def __call__(self, t):
        if self.tau is None:
            return self.c
        return self.c / (1.0 + t / self.tau)


@dataclass(frozen=True)
class FitOptions:
    solver: str = "em"
    max_iters: int = 500
    tol_rel_ll: float = 1e-8
    tol_grad: float = 1e-6
    lbfgs_memory: int = 10
    batch_size: int = None
    step_schedule: StepSchedule = StepSchedule()
    validation_fraction: float = 0.0
    patience: float = 20
    penalize: bool = False
    seed: int = 0
    # rsd only: use step_schedule instead of the Armijo line search.
    line_search: bool = True
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50
    curvature_eps: float = 1e-12

    def validate(self, n=None):
        if self.solver not in SOLVERS:
            raise ConfigurationError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")
        if self.lbfgs_memory < 1:
            raise ConfigurationError("lbfgs_memory must be at least 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be at least 1")
        if self.solver == "sgd" and self.batch_size is None:
            raise ConfigurationError("solver 'sgd' needs batch_size")
        if self.batch_size is not None:
            if self.batch_size < 1:
                raise ConfigurationError("batch_size must be positive")
            if n is not None and self.batch_size > n:
                raise ConfigurationError(f"batch_size {self.batch_size} exceeds N={n}")
        return self

    def solver_settings(self, **overrides):
        s = SolverSettings(
            max_iters=self.max_iters,
            tol_grad=self.tol_grad,
            tol_rel=self.tol_rel_ll,
            memory=self.lbfgs_memory,
            c1=self.armijo_c1,
            backtrack=self.backtrack,
            max_backtracks=self.max_backtracks,
            curvature_eps=self.curvature_eps,
        )
        return replace(s, **overrides)


@dataclass
class FitReport:
    """Outcome of one fit.

    ``ll_trace[t]`` is the training objective after iteration ``t + 1``
    (per epoch for ``sgd``); ``val_trace`` is filled only under early
    stopping.  ``reason`` is one of ``tol_ll``, ``tol_grad``,
    ``max_iters``, ``early_stop`` or ``line_search``.
    """

    theta_hat: MixtureParams
    ll_trace: list
    val_trace: list = None
    converged: bool = False
    reason: str = "max_iters"
    iters: int = 0
    events: list = field(default_factory=list)
    final_objective: float = float("nan")


class Objective:
    """Training objective of a mixture on fixed data.

    ``value`` and ``egrad`` act on manifold points.  The log-prior
    hyperparameters are estimated once from the data when ``penalize`` is
    set; each component is penalized with the same prior.
    """

    def __init__(self, mixture, data, penalize=False):
        self.mixture = mixture
        self.data = as_batch(data)
        self.penalize = penalize
        self.hyper = mixture.component.penalizerparam(self.data) if penalize else None

    def penalty(self, theta):
        if not self.penalize:
            return 0.0
        comp = self.mixture.component
        return float(sum(comp.penalizercost(c, self.hyper) for c in theta.components))

    def value_params(self, theta, data=None):
        data = self.data if data is None else data
        return self.mixture.ll(theta, data) + self.penalty(theta)

    def value(self, point):
        return self.value_params(self.mixture.from_point(point))

    def egrad_params(self, theta, data=None, scale=None):
        data = self.data if data is None else data
        grad = self.mixture.llgrad(theta, data)
        if scale is not None:
            grad = _scale_tree(grad, scale)
        if self.penalize:
            comp = self.mixture.component
            for j, c in enumerate(theta.components):
                pg = comp.penalizergrad(c, self.hyper)
                key = f"c{j}"
                grad[key] = {k: grad[key][k] + pg[k] for k in grad[key]}
        return grad

    def egrad(self, point):
        return self.egrad_params(self.mixture.from_point(point))


def _scale_tree(tree, a):
    if isinstance(tree, dict):
        return {k: _scale_tree(v, a) for k, v in tree.items()}
    return tree * a


def initialize(mixture, data, rng):
    """Seeded hard partition followed by the component ``init``.

    ``K`` distinct data points are drawn as seeds; every datum joins its
    nearest seed.  Each cell with at least two points is passed to the
    component ``init``; smaller cells fall back to the full data.
    """
    data = as_batch(data)
    k = mixture.k
    if data.n < max(k, 2):
        raise InsufficientDataError(f"need at least {max(k, 2)} data points for K={k}")
    x, w = data.x, data.w
    seeds = x[:, rng.choice(data.n, size=k, replace=False)]
    dist = ((x[:, None, :] - seeds[:, :, None]) ** 2).sum(axis=0)
    labels = np.argmin(dist, axis=0)
    comps = []
    mass = np.empty(k)
    for j in range(k):
        cell = labels == j
        mass[j] = float(np.sum(w[cell]))
        if np.count_nonzero(w[cell]) >= 2:
            comps.append(mixture.component.init(DataBatch(x[:, cell], w[cell]), rng))
        else:
            comps.append(mixture.component.init(data, rng))
    weights = mass / mass.sum() if mass.sum() > 0 else np.full(k, 1.0 / k)
    return mixture.interior(MixtureParams(tuple(comps), weights))


def _start(mixture, data, options, theta0, rng):
    if theta0 is None:
        return initialize(mixture, data, rng)
    if theta0.k != mixture.k:
        raise ConfigurationError(f"theta0 has {theta0.k} components, mixture has {mixture.k}")
    return mixture.interior(theta0)


def _component_mstep(mixture, comp, data, hyper, options):
    """Numerical M-step for component families without a closed form."""
    family = mixture.component
    man = family.manifold

    def cost(point):
        theta = GaussianParams.from_point(point)
        val = family.ll(theta, data)
        if hyper is not None:
            val += family.penalizercost(theta, hyper)
        return val

    def egrad(point):
        theta = GaussianParams.from_point(point)
        g = family.llgrad(theta, data)
        if hyper is not None:
            pg = family.penalizergrad(theta, hyper)
            g = {k: g[k] + pg[k] for k in g}
        return g

    settings = options.solver_settings(max_iters=100)
    res = maximize(man, cost, egrad, comp.as_point(), "rlbfgs", settings)
    return GaussianParams.from_point(res.x)


def fit_em(mixture, data, options=None, theta0=None, callback=None):
    """Expectation-maximization.

    Each iteration computes responsibilities, re-estimates every component
    from the data weighted by ``w_i r_ij`` and sets ``p_j`` to the
    normalized responsibility mass.  Components whose mass falls below
    ``1e-8``, or whose unpenalized estimate is singular, are re-initialized
    from the full data and an event is recorded.
    """
    options = (options or FitOptions()).validate()
    data = as_batch(data)
    rng = np.random.default_rng(options.seed)
    theta = _start(mixture, data, options, theta0, rng)
    obj = Objective(mixture, data, options.penalize)
    family = mixture.component
    simplex = mixture.manifold.children["p"]
    closed_form = family.supports("estimatedefault")
    x, w = data.x, data.w
    total = float(np.sum(w))
    events = []

    lse, resp = mixture.estep(theta, data)
    f = float(np.dot(w, lse)) + obj.penalty(theta)
    report = FitReport(theta_hat=theta, ll_trace=[], final_objective=f)
    for it in range(1, options.max_iters + 1):
        comps = []
        mass = resp @ w
        for j, comp in enumerate(theta.components):
            wj = w * resp[j]
            if mass[j] < EMPTY_COMPONENT:
                events.append({"iter": it, "type": "empty_component", "component": j})
                comps.append(family.init(data, rng))
                continue
            batch = DataBatch(x, wj)
            if closed_form:
                est = family.estimatedefault(batch, obj.hyper)
            else:
                est = _component_mstep(mixture, comp, batch, obj.hyper, options)
            if est.degenerate:
                events.append({"iter": it, "type": "degenerate_component", "component": j})
                est = family.init(data, rng)
            comps.append(est)
        theta = MixtureParams(tuple(comps), simplex.project(mass / total))
        lse, resp = mixture.estep(theta, data)
        f_new = float(np.dot(w, lse)) + obj.penalty(theta)
        report.ll_trace.append(f_new)
        report.iters = it
        report.theta_hat = theta
        report.final_objective = f_new
        if not np.isfinite(f_new):
            report.reason = "diverged"
            break
        if callback is not None and callback(it, theta, f_new):
            report.reason = "early_stop"
            break
        if abs(f_new - f) <= options.tol_rel_ll * abs(f):
            report.reason, report.converged = "tol_ll", True
            break
        f = f_new
    report.events = events
    return report


def fit_riemannian(mixture, data, options=None, theta0=None, callback=None):
    """Maximize the (penalized) log-likelihood over the mixture manifold
    with ``rsd``, ``rcg`` or ``rlbfgs``."""
    options = (options or FitOptions(solver="rlbfgs")).validate()
    if options.solver not in ("rsd", "rcg", "rlbfgs"):
        raise ConfigurationError(f"fit_riemannian cannot run solver {options.solver!r}")
    data = as_batch(data)
    rng = np.random.default_rng(options.seed)
    theta = _start(mixture, data, options, theta0, rng)
    obj = Objective(mixture, data, options.penalize)
    overrides = {}
    if not options.line_search:
        if options.solver != "rsd":
            raise ConfigurationError("line_search=False is only available for rsd")
        overrides["fixed_step"] = options.step_schedule
    settings = options.solver_settings(**overrides)

    def on_iterate(it, point, f):
        return callback(it, mixture.from_point(point), f)

    inner_cb = on_iterate if callback is not None else None

    res = maximize(
        mixture.manifold, obj.value, obj.egrad, mixture.to_point(theta),
        options.solver, settings, inner_cb,
    )
    events = []
    reason = res.reason
    if reason == "callback":
        reason = "early_stop"
    elif reason == "line_search":
        events.append({"iter": res.iters + 1, "type": "line_search_failure"})
    return FitReport(
        theta_hat=mixture.from_point(res.x),
        ll_trace=list(res.trace),
        converged=res.converged,
        reason=reason,
        iters=res.iters,
        events=events,
        final_objective=res.f,
    )


def fit_sgd(mixture, data, options, theta0=None, callback=None):
    """Mini-batch Riemannian stochastic gradient ascent.

    Every epoch shuffles the data and walks through ``ceil(N / B)``
    batches.  A batch gradient is scaled by ``N / |batch|`` so it is
    unbiased for the full-data gradient; the penalizer gradient, when
    enabled, is always the full one.  ``max_iters`` counts epochs and the
    trace holds the full-data objective at the end of each epoch.
    """
    options = options.validate()
    data = as_batch(data)
    n = data.n
    options.validate(n)
    if options.solver != "sgd" and options.batch_size is None:
        raise ConfigurationError("fit_sgd needs batch_size")
    rng = np.random.default_rng(options.seed)
    theta = _start(mixture, data, options, theta0, rng)
    obj = Objective(mixture, data, options.penalize)
    man = mixture.manifold
    bsize = options.batch_size
    full_batch = bsize >= n
    n_batches = math.ceil(n / bsize)

    point = mixture.to_point(theta)
    f = obj.value(point)
    report = FitReport(theta_hat=theta, ll_trace=[], final_objective=f)
    step = 0
    for epoch in range(1, options.max_iters + 1):
        gnorm = None
        if full_batch:
            batches = [None]
        else:
            perm = rng.permutation(n)
            batches = [perm[b * bsize:(b + 1) * bsize] for b in range(n_batches)]
        try:
            for idx in batches:
                current = mixture.from_point(point)
                if idx is None:
                    eg = obj.egrad_params(current)
                else:
                    eg = obj.egrad_params(current, data.subset(idx), scale=n / idx.size)
                g = man.egrad_to_rgrad(point, eg)
                if full_batch:
                    gnorm = man.norm(point, g)
                    if gnorm < options.tol_grad:
                        break
                point = man.retract(point, g, options.step_schedule(step))
                step += 1
            f_new = obj.value(point)
        except (MixfitError, np.linalg.LinAlgError) as exc:
            report.events.append({"iter": epoch, "type": "step_failure", "message": str(exc)})
            report.reason = "line_search"
            break
        if gnorm is not None and gnorm < options.tol_grad:
            report.reason, report.converged = "tol_grad", True
            break
        theta = mixture.from_point(point)
        report.ll_trace.append(f_new)
        report.iters = epoch
        report.theta_hat = theta
        report.final_objective = f_new
        if not np.isfinite(f_new):
            report.reason = "diverged"
            break
        if callback is not None and callback(epoch, theta, f_new):
            report.reason = "early_stop"
            break
        if abs(f_new - f) <= options.tol_rel_ll * abs(f):
            report.reason, report.converged = "tol_ll", True
            break
        f = f_new
    return report


_FITTERS = {
    "em": fit_em,
    "rsd": fit_riemannian,
    "rcg": fit_riemannian,
    "rlbfgs": fit_riemannian,
    "sgd": fit_sgd,
}


def split_validation(data, fraction, seed):
    """Seeded uniform shuffle into ``(train, validation)`` views."""
    data = as_batch(data)
    n_val = int(round(fraction * data.n))
    if n_val < 1 or n_val >= data.n:
        raise ConfigurationError(
            f"validation_fraction={fraction} leaves an empty split for N={data.n}"
        )
    perm = np.random.default_rng(seed).permutation(data.n)
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))


def early_stopping_wrap(fit_op, mixture, data, options, theta0=None):
    """Run ``fit_op`` on a training split while tracking validation ll.

    The validation objective is the unpenalized log-likelihood.  The run
    stops once ``patience`` iterations pass without a new validation
    maximum, and the best-validation parameters are returned.
    """
    if not options.validation_fraction > 0:
        raise ConfigurationError("early stopping needs validation_fraction > 0")
    train, val = split_validation(data, options.validation_fraction, options.seed)
    inner = replace(options, validation_fraction=0.0)
    patience = options.patience if options.patience is not None else math.inf
    state = {"best": -math.inf, "best_it": 0, "theta": None, "trace": []}

    def callback(it, theta, f):
        v = mixture.ll(theta, val)
        state["trace"].append(v)
        if v > state["best"]:
            state["best"], state["best_it"], state["theta"] = v, it, theta
        return it - state["best_it"] >= patience

    report = fit_op(mixture, train, inner, theta0, callback)
    report.val_trace = state["trace"]
    if state["theta"] is not None:
        report.theta_hat = state["theta"]
    return report


def fit(mixture, data, options=None, theta0=None):
    """Fit ``mixture`` to ``data`` with the configured solver."""
    options = (options or FitOptions()).validate()
    data = as_batch(data)
    fitter = _FITTERS[options.solver]
    if options.validation_fraction > 0:
        return early_stopping_wrap(fitter, mixture, data, options, theta0)
    return fitter(mixture, data, options, theta0)
