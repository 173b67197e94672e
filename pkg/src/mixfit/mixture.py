"""Finite mixtures of a single component family.

A :class:`Mixture` combines ``K`` components of one :class:`Distribution`
with weights on the simplex.  Its parameter manifold is the product of
``K`` component manifolds (named ``c0 .. c{K-1}``) and a
:class:`SimplexInterior` named ``p``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distributions import DataBatch, GaussianParams, _repair_cov, as_batch
from .errors import DimensionError, InsufficientDataError
from .manifolds import Product, SimplexInterior

__all__ = ["MixtureParams", "Mixture"]

_TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Component parameters plus mixture weights.

    Weights must be nonnegative and sum to one.  Exact zeros are accepted
    here so that degenerate models can be sampled; the estimators move
    weights into the simplex interior before optimizing.
    """

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(comps) < 1:
            raise DimensionError("a mixture needs at least one component")
        if w.size != len(comps):
            raise DimensionError(f"{w.size} weights for {len(comps)} components")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("mixture weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        d = comps[0].d
        if any(c.d != d for c in comps):
            raise DimensionError("mixture components have different dimensions")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def k(self):
        return len(self.components)

    @property
    def d(self):
        return self.components[0].d


class Mixture:
    """Mixture of ``k`` components drawn from the ``component`` family.

    Parameters
    ----------
    component : Distribution
        Component family (for example :class:`~mixfit.distributions.Gaussian`).
    k : int
        Number of components.
    merge_score : {"responsibility", "symmetric_kl"}
        Ranking used by :meth:`merge_candidates`.
    """

    def __init__(self, component, k, merge_score="responsibility"):
        if k < 1:
            raise ValueError("k must be at least 1")
        if merge_score not in ("responsibility", "symmetric_kl"):
            raise ValueError(f"unknown merge score {merge_score!r}")
        self.component = component
        self.k = int(k)
        self.merge_score = merge_score
        children = {f"c{j}": component.manifold for j in range(self.k)}
        children["p"] = SimplexInterior(self.k)
        self.manifold = Product(children)

    def __repr__(self):
        return f"Mixture({self.component!r}, {self.k})"

    @property
    def num_free_params(self):
        return self.manifold.dim

    def with_k(self, k):
        return Mixture(self.component, k, self.merge_score)

    # -- parameter conversion ------------------------------------------------

    def to_point(self, theta):
        self._check(theta)
        point = {f"c{j}": c.as_point() for j, c in enumerate(theta.components)}
        point["p"] = theta.weights
        return point

    def from_point(self, point):
        comps = tuple(GaussianParams.from_point(point[f"c{j}"]) for j in range(self.k))
        return MixtureParams(comps, point["p"])

    def interior(self, theta):
        """Same parameters with weights clamped into the simplex interior."""
        return MixtureParams(theta.components, self.manifold.children["p"].project(theta.weights))

    def _check(self, theta):
        if theta.k != self.k:
            raise DimensionError(f"parameters have {theta.k} components, mixture has {self.k}")

    # -- likelihood ----------------------------------------------------------

    def joint_log(self, theta, x):
        """``K x N`` matrix of ``log p_j + log f_j(x_i)`` (unweighted)."""
        self._check(theta)
        rows = [self.component.log_density(c, x) for c in theta.components]
        with np.errstate(divide="ignore"):
            logp = np.log(theta.weights)
        return np.vstack(rows) + logp[:, None]

    def estep(self, theta, data):
        """Unweighted per-datum mixture log-density and responsibilities."""
        data = as_batch(data)
        if data.d != theta.d:
            raise DimensionError(f"data has d={data.d}, parameters have d={theta.d}")
        return _kernels.log_normalize(self.joint_log(theta, data.x))

    def llvec(self, theta, data):
        data = as_batch(data)
        lse, _ = self.estep(theta, data)
        return data.w * lse

    def ll(self, theta, data):
        data = as_batch(data)
        lse, _ = self.estep(theta, data)
        return float(np.dot(data.w, lse))

    def posteriors(self, theta, data):
        """Responsibilities ``r[j, i]``; each column sums to one."""
        return self.estep(theta, data)[1]

    def llgrad(self, theta, data, resp=None):
        """Ambient gradient over the product manifold.

        Component ``j`` receives the component gradient with effective
        weights ``w_i r_ij``; the weight entry is ``sum_i w_i r_ij / p_j``.
        """
        data = as_batch(data)
        if resp is None:
            resp = self.posteriors(theta, data)
        w = data.w
        x = data.x
        grad = {}
        for j, comp in enumerate(theta.components):
            grad[f"c{j}"] = self.component.llgrad(comp, DataBatch(x, w * resp[j]))
        grad["p"] = (resp @ w) / theta.weights
        return grad

    # -- sampling ------------------------------------------------------------

    def sample(self, theta, n, rng, return_labels=False):
        """Draw a component per datum from the weights, then sample it."""
        self._check(theta)
        if n < 1:
            raise ValueError("n must be at least 1")
        labels = rng.choice(self.k, size=int(n), p=theta.weights)
        x = np.empty((theta.d, int(n)))
        for j, comp in enumerate(theta.components):
            idx = np.flatnonzero(labels == j)
            if idx.size:
                x[:, idx] = self.component.sample(comp, idx.size, rng).matrix
        batch = DataBatch(x)
        if return_labels:
            return batch, labels
        return batch

    # -- split / merge surgery ----------------------------------------------

    def split(self, theta, j, rng=None):
        """Replace component ``j`` by two offspring along its principal axis.

        Offspring means are ``mu +/- sqrt(lam1)/2 v1`` and both get covariance
        ``Sigma - (lam1/4) v1 v1^T``, so merging them back restores the
        parent's first two moments.  When the top eigenvalue is tied, the
        direction is drawn at random inside the tied eigenspace.
        """
        self._check(theta)
        if not 0 <= j < self.k:
            raise IndexError(f"component index {j} out of range for k={self.k}")
        comp = theta.components[j]
        lam, vecs = np.linalg.eigh(comp.sigma)
        top = lam[-1]
        tied = np.flatnonzero(lam >= top - _TIE_TOL * max(abs(top), 1.0))
        if tied.size > 1:
            if rng is None:
                rng = np.random.default_rng(0)
            coef = rng.standard_normal(tied.size)
            v = vecs[:, tied] @ coef
            v /= np.linalg.norm(v)
        else:
            v = vecs[:, -1]
        offset = 0.5 * np.sqrt(top) * v
        child_sigma = comp.sigma - 0.25 * top * np.outer(v, v)
        child_sigma = 0.5 * (child_sigma + child_sigma.T)
        try:
            np.linalg.cholesky(child_sigma)
        except np.linalg.LinAlgError:
            child_sigma = _repair_cov(child_sigma)
        a = GaussianParams(comp.mu + offset, child_sigma)
        b = GaussianParams(comp.mu - offset, child_sigma.copy())
        comps = list(theta.components)
        comps[j : j + 1] = [a, b]
        w = theta.weights
        weights = np.concatenate([w[:j], [w[j] / 2, w[j] / 2], w[j + 1 :]])
        return MixtureParams(tuple(comps), weights / weights.sum())

    def merge(self, theta, i, j):
        """Moment-preserving merge of components ``i`` and ``j``.

        The merged component sits at position ``min(i, j)``.
        """
        self._check(theta)
        if i == j:
            raise ValueError("cannot merge a component with itself")
        if self.k < 2:
            raise ValueError("merging needs at least two components")
        for idx in (i, j):
            if not 0 <= idx < self.k:
                raise IndexError(f"component index {idx} out of range for k={self.k}")
        ci, cj = theta.components[i], theta.components[j]
        pi, pj = theta.weights[i], theta.weights[j]
        p = pi + pj
        mu = (pi * ci.mu + pj * cj.mu) / p
        di, dj = ci.mu - mu, cj.mu - mu
        sigma = (pi * (ci.sigma + np.outer(di, di)) + pj * (cj.sigma + np.outer(dj, dj))) / p
        sigma = 0.5 * (sigma + sigma.T)
        lo, hi = min(i, j), max(i, j)
        comps = list(theta.components)
        weights = theta.weights.copy()
        comps[lo] = GaussianParams(mu, sigma)
        weights[lo] = p
        del comps[hi]
        weights = np.delete(weights, hi)
        return MixtureParams(tuple(comps), weights / weights.sum())

    def split_candidates(self, theta, data):
        """Component indices ranked by local fit mismatch, worst first.

        The score of ``j`` is ``KL(local || f_j)`` where ``local`` is the
        Gaussian moment fit of the data weighted by ``w_i r_ij``.
        """
        scores = self.split_scores(theta, data)
        return [int(j) for j in np.argsort(-scores, kind="stable")]

    def split_scores(self, theta, data):
        data = as_batch(data)
        if data.n == 0:
            raise InsufficientDataError("split scoring needs data")
        resp = self.posteriors(theta, data)
        w = data.w
        scores = np.full(self.k, -np.inf)
        for j, comp in enumerate(theta.components):
            wj = w * resp[j]
            if np.sum(wj) <= 1e-8:
                continue
            local = self.component.estimatedefault(data.with_weights(wj))
            scores[j] = self.component.kl(local, comp)
        return scores

    def merge_candidates(self, theta, data):
        """Index pairs ``(i, j)`` with ``i < j`` ranked by similarity."""
        scores = self.merge_scores(theta, data)
        pairs = sorted(scores, key=lambda ij: -scores[ij])
        return pairs

    def merge_scores(self, theta, data):
        data = as_batch(data)
        if data.n == 0:
            raise InsufficientDataError("merge scoring needs data")
        scores = {}
        if self.merge_score == "symmetric_kl":
            comps = theta.components
            for i in range(self.k):
                for j in range(i + 1, self.k):
                    kl = self.component.kl(comps[i], comps[j]) + self.component.kl(comps[j], comps[i])
                    scores[(i, j)] = -kl
            return scores
        resp = self.posteriors(theta, data)
        norms = np.linalg.norm(resp, axis=1)
        for i in range(self.k):
            for j in range(i + 1, self.k):
                denom = norms[i] * norms[j]
                scores[(i, j)] = float(resp[i] @ resp[j] / denom) if denom > 0 else 0.0
        return scores

    # -- summaries -----------------------------------------------------------

    def entropy_bound(self, theta):
        """``sum_j p_j (-log p_j + H_j)``.

        This is the joint entropy of (component label, datum), which bounds
        the mixture entropy from above; it is exact for ``K = 1``.
        """
        self._check(theta)
        total = 0.0
        for p, comp in zip(theta.weights, theta.components):
            if p > 0:
                total += p * (-np.log(p) + self.component.entropy(comp))
        return float(total)
