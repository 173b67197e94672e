"""Information criteria and competitive split-and-merge (CSM).

CSM searches over the number of components.  Every round it proposes the
best-ranked split and merge moves, screens each with a short fit, fully
fits the most promising one, and keeps it only if the selection criterion
strictly improves.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import as_batch
from .errors import ConfigurationError, MixfitError
from .estimation import FitOptions, FitReport, fit, split_validation
from .mixture import Mixture

__all__ = ["CriterionValue", "aic", "bic", "CsmOptions", "SelectionResult", "csm_fit", "CRITERIA"]

CRITERIA = ("bic", "aic", "validation_ll")


@dataclass(frozen=True)
class CriterionValue:
    kind: str
    value: float
    num_params: int
    n: int


def aic(ll, num_params, n):
    """Akaike criterion ``-2 ll + 2 k``; lower is better."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return CriterionValue("aic", -2.0 * ll + 2.0 * num_params, int(num_params), int(n))


def bic(ll, num_params, n):
    """Bayesian criterion ``-2 ll + k ln n``; lower is better."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return CriterionValue("bic", -2.0 * ll + num_params * math.log(n), int(num_params), int(n))


@dataclass(frozen=True)
class CsmOptions:
    k_init: int = 1
    k_min: int = 1
    k_max: int = 10
    criterion: str = "bic"
    candidates_per_round: int = 3
    inner: FitOptions = FitOptions()
    max_rounds: int = 30
    # Required improvement before a move is accepted.
    slack: float = 1e-6

    def validate(self):
        if self.k_min < 1:
            raise ConfigurationError("k_min must be at least 1")
        if not self.k_min <= self.k_init <= self.k_max:
            raise ConfigurationError(
                f"need k_min <= k_init <= k_max, got {self.k_min}, {self.k_init}, {self.k_max}"
            )
        if self.criterion not in CRITERIA:
            raise ConfigurationError(f"unknown criterion {self.criterion!r}; choose from {CRITERIA}")
        if self.candidates_per_round < 1:
            raise ConfigurationError("candidates_per_round must be at least 1")
        if self.max_rounds < 0:
            raise ConfigurationError("max_rounds must be nonnegative")
        self.inner.validate()
        return self


@dataclass
class SelectionResult:
    """Best model found plus the per-round log.

    ``log`` entries are dicts with keys ``round``, ``move``, ``k``,
    ``criterion`` and ``accepted``.  ``candidates`` records every screened
    move, including failures.
    """

    report: FitReport
    mixture: Mixture
    criterion: float
    log: list = field(default_factory=list)
    candidates: list = field(default_factory=list)


class _Scorer:
    def __init__(self, data, options):
        self.kind = options.criterion
        if self.kind == "validation_ll":
            frac = options.inner.validation_fraction or 0.2
            self.train, self.val = split_validation(data, frac, options.inner.seed)
        else:
            self.train, self.val = data, None
        self.inner = replace(options.inner, validation_fraction=0.0) if self.val is not None else options.inner

    def score(self, mixture, theta):
        if self.kind == "validation_ll":
            return mixture.ll(theta, self.val)
        ll = mixture.ll(theta, self.train)
        crit = bic if self.kind == "bic" else aic
        return crit(ll, mixture.num_free_params, self.train.n).value

    def better(self, new, old, slack):
        if self.kind == "validation_ll":
            return new > old + slack
        return new < old - slack


def csm_fit(component, data, options=None):
    """Competitive split-and-merge search over the number of components.

    Parameters
    ----------
    component : Distribution
        Component family of the mixture.
    data : DataBatch or array
    options : CsmOptions

    Returns
    -------
    SelectionResult
    """
    options = (options or CsmOptions()).validate()
    data = as_batch(data)
    scorer = _Scorer(data, options)
    inner = scorer.inner
    train = scorer.train
    short = replace(inner, max_iters=max(1, inner.max_iters // 5))
    rng = np.random.default_rng(inner.seed)

    mixture = Mixture(component, options.k_init)
    report = fit(mixture, train, inner)
    crit = scorer.score(mixture, report.theta_hat)
    result = SelectionResult(report=report, mixture=mixture, criterion=crit)
    result.log.append({"round": 0, "move": "init", "k": mixture.k, "criterion": crit, "accepted": True})

    for rnd in range(1, options.max_rounds + 1):
        theta = result.report.theta_hat
        mixture = result.mixture
        proposals = []
        if mixture.k < options.k_max:
            for j in mixture.split_candidates(theta, train)[: options.candidates_per_round]:
                proposals.append((f"split {j}", mixture.with_k(mixture.k + 1), lambda j=j: mixture.split(theta, j, rng)))
        if mixture.k > options.k_min:
            for i, j in mixture.merge_candidates(theta, train)[: options.candidates_per_round]:
                proposals.append((f"merge {i} {j}", mixture.with_k(mixture.k - 1), lambda i=i, j=j: mixture.merge(theta, i, j)))
        if not proposals:
            break

        best = None
        for idx, (move, target, surgery) in enumerate(proposals):
            try:
                start = surgery()
                partial = fit(target, train, short, theta0=start)
                score = scorer.score(target, partial.theta_hat)
            except (MixfitError, np.linalg.LinAlgError, ValueError) as exc:
                result.candidates.append({"round": rnd, "move": move, "error": str(exc)})
                continue
            result.candidates.append({"round": rnd, "move": move, "k": target.k, "criterion": score})
            if not np.isfinite(score):
                continue
            if best is None or scorer.better(score, best[0], 0.0):
                best = (score, idx, move, target, partial)
        if best is None:
            result.log.append({"round": rnd, "move": None, "k": mixture.k, "criterion": result.criterion, "accepted": False})
            break

        _, _, move, target, partial = best
        try:
            full = fit(target, train, inner, theta0=partial.theta_hat)
            score = scorer.score(target, full.theta_hat)
        except (MixfitError, np.linalg.LinAlgError, ValueError) as exc:
            result.candidates.append({"round": rnd, "move": move, "error": str(exc)})
            result.log.append({"round": rnd, "move": move, "k": target.k, "criterion": None, "accepted": False})
            break
        accepted = bool(np.isfinite(score)) and scorer.better(score, result.criterion, options.slack)
        result.log.append({"round": rnd, "move": move, "k": target.k, "criterion": score, "accepted": accepted})
        if not accepted:
            break
        full.events.append({"round": rnd, "type": move.split()[0], "move": move, "k": target.k})
        full.events[:0] = result.report.events
        result.report, result.mixture, result.criterion = full, target, score
    return result
