"""Distribution contract and the multivariate Gaussian.

A distribution is described by its parameter manifold plus a set of
operations on ``(theta, data)``.  Data is always column-oriented: a
``d x N`` matrix with one datum per column, optionally weighted.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from . import _kernels
from .errors import DimensionError, InsufficientDataError, NotSPDError
from .manifolds import SPD, SPD_JITTER, Euclidean, Product, sym

__all__ = [
    "DataBatch",
    "as_batch",
    "Distribution",
    "GaussianParams",
    "PenalizerHyper",
    "Gaussian",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class DataBatch:
    """Column-oriented data with optional per-datum weights.

    ``index_subset`` selects a subset of columns without copying the
    underlying matrix; :attr:`x` and :attr:`w` return the selected view.
    """

    matrix: np.ndarray
    weights: np.ndarray = None
    index_subset: np.ndarray = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m[None, :]
        if m.ndim != 2:
            raise DimensionError("data matrix must be 2-D (d x N)")
        object.__setattr__(self, "matrix", m)
        n = m.shape[1]
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape != (n,):
                raise DimensionError(f"weights have length {w.size}, expected {n}")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)
        if self.index_subset is not None:
            idx = np.asarray(self.index_subset, dtype=np.intp).reshape(-1)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise IndexError("index_subset entries must lie in [0, N)")
            object.__setattr__(self, "index_subset", idx)

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        """Number of selected data points."""
        if self.index_subset is not None:
            return self.index_subset.size
        return self.matrix.shape[1]

    @property
    def x(self):
        if self.index_subset is None:
            return self.matrix
        return self.matrix[:, self.index_subset]

    @property
    def w(self):
        if self.weights is None:
            return np.ones(self.n)
        if self.index_subset is None:
            return self.weights
        return self.weights[self.index_subset]

    @property
    def total_weight(self):
        return float(np.sum(self.w))

    def subset(self, idx):
        """View of the selected columns ``idx`` (relative to this batch)."""
        idx = np.asarray(idx, dtype=np.intp)
        if self.index_subset is not None:
            idx = self.index_subset[idx]
        return DataBatch(self.matrix, self.weights, idx)

    def with_weights(self, w):
        """Selected columns with the weights replaced by ``w``."""
        return DataBatch(self.x, w)


def as_batch(data):
    """Accept a ``DataBatch`` or anything array-like (``d x N``)."""
    if isinstance(data, DataBatch):
        return data
    return DataBatch(data)


def _chol(sigma):
    try:
        return cholesky(sigma, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise NotSPDError(f"covariance is not positive definite: {exc}") from None


def _logdet(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _weighted_moments(x, w):
    total = float(np.sum(w))
    mean = x @ w / total
    diff = x - mean[:, None]
    return total, mean, _kernels.weighted_scatter(diff, w)


def _repair_cov(cov, jitter=SPD_JITTER):
    """Add ``jitter * scale * I`` until Cholesky succeeds.

    ``scale`` is the mean variance, or 1 when the covariance is zero.
    """
    d = cov.shape[0]
    scale = float(np.trace(cov)) / d
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    eps = jitter * scale
    for _ in range(30):
        cand = cov + eps * np.eye(d)
        try:
            cholesky(cand, lower=True)
            return cand
        except LinAlgError:
            eps *= 10.0
    raise NotSPDError("covariance could not be repaired")


class Distribution(ABC):
    """Operations every distribution exposes.

    Optional operations raise ``NotImplementedError`` by default; callers
    branch on :meth:`supports`.
    """

    manifold = None
    optional_ops = ()

    @property
    def num_free_params(self):
        return self.manifold.dim

    def supports(self, op):
        return op in self.optional_ops

    @abstractmethod
    def llvec(self, theta, data):
        """Weighted log-likelihood of each datum."""

    def ll(self, theta, data):
        return float(np.sum(self.llvec(theta, data)))

    @abstractmethod
    def llgrad(self, theta, data):
        """Ambient gradient of the summed weighted log-likelihood."""

    @abstractmethod
    def sample(self, theta, n, rng):
        """Draw ``n`` samples as a ``DataBatch``."""

    @abstractmethod
    def init(self, data, rng):
        """Initial parameters estimated from the data."""

    def estimatedefault(self, data, hyper=None):
        raise NotImplementedError

    def llgraddata(self, theta, data):
        raise NotImplementedError

    def kl(self, theta_p, theta_q):
        raise NotImplementedError

    def entropy(self, theta):
        raise NotImplementedError

    def penalizerparam(self, data):
        raise NotImplementedError

    def penalizercost(self, theta, hyper):
        raise NotImplementedError

    def penalizergrad(self, theta, hyper):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean vector and covariance matrix of a Gaussian.

    ``degenerate`` is set by :meth:`Gaussian.estimatedefault` when the
    maximum-likelihood covariance was singular and had to be jittered.
    """

    mu: np.ndarray
    sigma: np.ndarray
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma.reshape(1, 1)
        if sigma.shape != (mu.size, mu.size):
            raise DimensionError(f"sigma has shape {sigma.shape}, expected {(mu.size, mu.size)}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self):
        return self.mu.size

    def as_point(self):
        return {"mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_point(cls, point):
        return cls(point["mu"], point["sigma"])

    def validate(self):
        SPD(self.d).check_point(self.sigma)
        return self


@dataclass(frozen=True, eq=False)
class PenalizerHyper:
    """Normal-inverse-Wishart prior hyperparameters.

    ``nu`` degrees of freedom, ``lam`` scale matrix, ``kappa`` mean
    shrinkage strength and ``m0`` prior mean.
    """

    nu: float
    lam: np.ndarray
    kappa: float
    m0: np.ndarray

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        m0 = np.asarray(self.m0, dtype=float).reshape(-1)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "m0", m0)
        if lam.shape != (m0.size, m0.size):
            raise DimensionError("lam and m0 dimensions disagree")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


class Gaussian(Distribution):
    """Multivariate normal distribution on ``R^d``.

    Parameter manifold is ``Product(mu=Euclidean(d), sigma=SPD(d))``.  All
    covariance algebra goes through the Cholesky factor.

    Parameters
    ----------
    d : int
        Data dimension.
    closed_form : bool
        When False, :meth:`estimatedefault` is reported as unsupported so
        that EM falls back to numerical maximization in its M-step.
    """

    def __init__(self, d, closed_form=True):
        self.d = int(d)
        self.closed_form = closed_form
        self.manifold = Product({"mu": Euclidean(self.d), "sigma": SPD(self.d)})
        ops = ["ll", "llgraddata", "kl", "entropy", "penalizerparam", "penalizercost", "penalizergrad"]
        if closed_form:
            ops.append("estimatedefault")
        self.optional_ops = tuple(ops)

    def __repr__(self):
        return f"Gaussian({self.d})"

    def _prep(self, theta, data):
        data = as_batch(data)
        if data.d != self.d or theta.d != self.d:
            raise DimensionError(f"dimension mismatch: data d={data.d}, params d={theta.d}, expected {self.d}")
        return data

    def log_density(self, theta, x):
        """Unweighted log-density of each column of ``x``."""
        chol = _chol(theta.sigma)
        maha = _kernels.mahalanobis_sq(chol, x - theta.mu[:, None])
        return -0.5 * (self.d * LOG_2PI + _logdet(chol) + maha)

    def llvec(self, theta, data):
        data = self._prep(theta, data)
        return data.w * self.log_density(theta, data.x)

    def ll(self, theta, data):
        data = self._prep(theta, data)
        chol = _chol(theta.sigma)
        w = data.w
        maha = _kernels.mahalanobis_sq(chol, data.x - theta.mu[:, None])
        return float(-0.5 * (np.sum(w) * (self.d * LOG_2PI + _logdet(chol)) + np.dot(w, maha)))

    def llgrad(self, theta, data):
        data = self._prep(theta, data)
        w = data.w
        cf = (_chol(theta.sigma), True)
        white = cho_solve(cf, data.x - theta.mu[:, None])
        sigma_inv = cho_solve(cf, np.eye(self.d))
        d_mu = white @ w
        d_sigma = 0.5 * (_kernels.weighted_scatter(white, w) - np.sum(w) * sigma_inv)
        return {"mu": d_mu, "sigma": sym(d_sigma)}

    def llgraddata(self, theta, data):
        data = self._prep(theta, data)
        cf = (_chol(theta.sigma), True)
        return -data.w * cho_solve(cf, data.x - theta.mu[:, None])

    def sample(self, theta, n, rng):
        if n < 1:
            raise ValueError("n must be at least 1")
        chol = _chol(theta.sigma)
        z = rng.standard_normal((self.d, int(n)))
        return DataBatch(theta.mu[:, None] + chol @ z)

    def init(self, data, rng):
        """Weighted moments with a small random shift of the mean."""
        data = as_batch(data)
        if data.d != self.d:
            raise DimensionError(f"data has d={data.d}, expected {self.d}")
        w = data.w
        if data.n < 2 or np.count_nonzero(w) < 1:
            raise InsufficientDataError("initialization needs at least two data points")
        _, mean, scatter = _weighted_moments(data.x, w)
        cov = scatter / float(np.sum(w))
        spread = np.sqrt(np.diag(cov))
        mu = mean + 0.1 * spread * rng.standard_normal(self.d)
        scale = float(np.trace(cov)) / self.d
        if not scale > 0:
            scale = 1.0
        sigma = sym(cov) + SPD_JITTER * scale * np.eye(self.d)
        return GaussianParams(mu, sigma)

    def estimatedefault(self, data, hyper=None):
        """Weighted maximum-likelihood estimate, or the MAP estimate under
        the Normal-inverse-Wishart prior when ``hyper`` is given.

        The MAP estimate maximizes ``ll + penalizercost`` exactly.
        """
        data = self._prep(GaussianParams(np.zeros(self.d), np.eye(self.d)), data)
        w = data.w
        total = float(np.sum(w))
        if not total > 0:
            raise InsufficientDataError("total weight must be positive")
        _, xbar, scatter = _weighted_moments(data.x, w)
        if hyper is None:
            cov = sym(scatter / total)
            try:
                chol = cholesky(cov, lower=True)
                ok = np.all(np.diag(chol) > 0)
            except LinAlgError:
                ok = False
            if ok:
                return GaussianParams(xbar, cov)
            return GaussianParams(xbar, _repair_cov(cov), degenerate=True)
        kappa = hyper.kappa
        mu = (total * xbar + kappa * hyper.m0) / (total + kappa)
        dev = xbar - hyper.m0
        shrink = total * kappa / (total + kappa) if kappa > 0 else 0.0
        b = scatter + hyper.lam + shrink * np.outer(dev, dev)
        cov = sym(b / (total + hyper.nu + self.d + 1.0))
        return GaussianParams(mu, cov)

    def penalizerparam(self, data):
        """Data-driven prior: ``nu = d + 2``, ``kappa = 0.01``, ``m0`` the
        sample mean and ``lam = 0.01 diag(cov) + 1e-8 I``."""
        data = as_batch(data)
        if data.n < 1:
            raise InsufficientDataError("penalizer defaults need data")
        w = data.w
        total, mean, scatter = _weighted_moments(data.x, w)
        cov = scatter / total
        lam = 0.01 * np.diag(np.diag(cov)) + 1e-8 * np.eye(self.d)
        return PenalizerHyper(nu=self.d + 2.0, lam=lam, kappa=0.01, m0=mean)

    def penalizercost(self, theta, hyper):
        cf = (_chol(theta.sigma), True)
        dev = theta.mu - hyper.m0
        tr = float(np.trace(cho_solve(cf, hyper.lam)))
        quad = float(dev @ cho_solve(cf, dev))
        return -0.5 * (hyper.nu + self.d + 1.0) * _logdet(cf[0]) - 0.5 * tr - 0.5 * hyper.kappa * quad

    def penalizergrad(self, theta, hyper):
        cf = (_chol(theta.sigma), True)
        sigma_inv = cho_solve(cf, np.eye(self.d))
        white = cho_solve(cf, theta.mu - hyper.m0)
        d_mu = -hyper.kappa * white
        d_sigma = (
            -0.5 * (hyper.nu + self.d + 1.0) * sigma_inv
            + 0.5 * sigma_inv @ hyper.lam @ sigma_inv
            + 0.5 * hyper.kappa * np.outer(white, white)
        )
        return {"mu": d_mu, "sigma": sym(d_sigma)}

    def kl(self, theta_p, theta_q):
        """``KL(N_p || N_q)`` in closed form."""
        if theta_p.d != theta_q.d:
            raise DimensionError("KL arguments have different dimensions")
        lp = _chol(theta_p.sigma)
        lq = _chol(theta_q.sigma)
        cf = (lq, True)
        dev = theta_q.mu - theta_p.mu
        tr = float(np.trace(cho_solve(cf, theta_p.sigma)))
        quad = float(dev @ cho_solve(cf, dev))
        return 0.5 * (tr + quad - theta_p.d + _logdet(lq) - _logdet(lp))

    def entropy(self, theta):
        chol = _chol(theta.sigma)
        return 0.5 * (theta.d * (1.0 + LOG_2PI) + _logdet(chol))
