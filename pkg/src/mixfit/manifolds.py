"""Riemannian geometry for parameter spaces.

Four manifolds are provided: :class:`Euclidean`, :class:`SPD` (symmetric
positive-definite matrices with the affine-invariant metric),
:class:`SimplexInterior` (strictly positive probability vectors with the
Fisher metric) and :class:`Product`, a named product of the others.

Points and tangent vectors are plain numpy arrays for the leaf manifolds
and ``dict`` objects (keyed by child name) for products.  All operations
are pure; descriptors are immutable.
"""

from abc import ABC, abstractmethod
from types import MappingProxyType

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DimensionError, NotSPDError, NumericError

__all__ = [
    "SYM_RTOL",
    "SPD_JITTER",
    "WEIGHT_FLOOR",
    "Manifold",
    "Euclidean",
    "SPD",
    "SimplexInterior",
    "Product",
    "sym",
]

SYM_RTOL = 1e-12
SPD_JITTER = 1e-6
WEIGHT_FLOOR = 1e-10


def sym(a):
    """Symmetric part ``(A + A^T) / 2``."""
    return 0.5 * (a + a.T)


def _check_shape(a, shape, what="array"):
    if np.shape(a) != tuple(shape):
        raise DimensionError(f"{what} has shape {np.shape(a)}, expected {tuple(shape)}")


class Manifold(ABC):
    """Interface every manifold implements."""

    @property
    @abstractmethod
    def dim(self):
        """Intrinsic dimension."""

    @abstractmethod
    def inner(self, x, u, v):
        """Riemannian metric at ``x``."""

    def norm(self, x, u):
        return float(np.sqrt(max(self.inner(x, u, u), 0.0)))

    @abstractmethod
    def retract(self, x, u, t=1.0):
        """Map the tangent step ``t * u`` at ``x`` back onto the manifold."""

    @abstractmethod
    def egrad_to_rgrad(self, x, egrad):
        """Convert an ambient (Euclidean) gradient to the Riemannian gradient."""

    @abstractmethod
    def transport(self, x_from, x_to, u):
        """Move tangent ``u`` at ``x_from`` to the tangent space at ``x_to``."""

    @abstractmethod
    def rand_point(self, rng):
        """Random point, for initialization and tests."""

    @abstractmethod
    def rand_tangent(self, x, rng):
        """Random tangent vector at ``x``."""

    @abstractmethod
    def zero_tangent(self, x):
        """Zero tangent vector at ``x``."""

    @abstractmethod
    def lincomb(self, x, a, u, b=0.0, v=None):
        """``a * u + b * v`` in the tangent space at ``x``."""

    @abstractmethod
    def check_point(self, x):
        """Raise if ``x`` is not a valid point."""

    @abstractmethod
    def check_tangent(self, x, u):
        """Raise if ``u`` is not a valid tangent at ``x``."""


class _Flat(Manifold):
    """Shared array arithmetic for the leaf manifolds."""

    shape = ()

    def zero_tangent(self, x):
        return np.zeros(self.shape)

    def lincomb(self, x, a, u, b=0.0, v=None):
        _check_shape(u, self.shape, "tangent")
        if v is None:
            return a * u
        _check_shape(v, self.shape, "tangent")
        return a * u + b * v


class Euclidean(_Flat):
    """Flat space of real arrays with the Frobenius inner product.

    ``Euclidean(3)`` holds vectors of length 3, ``Euclidean(2, 3)`` holds
    2x3 matrices.
    """

    def __init__(self, rows, cols=None):
        self.shape = (int(rows),) if cols is None else (int(rows), int(cols))

    def __repr__(self):
        return f"Euclidean{self.shape}"

    def __eq__(self, other):
        return isinstance(other, Euclidean) and other.shape == self.shape

    __hash__ = None

    @property
    def dim(self):
        return int(np.prod(self.shape))

    def inner(self, x, u, v):
        _check_shape(u, self.shape, "tangent")
        _check_shape(v, self.shape, "tangent")
        return float(np.vdot(u, v))

    def retract(self, x, u, t=1.0):
        _check_shape(x, self.shape, "point")
        _check_shape(u, self.shape, "tangent")
        if t == 0:
            return np.array(x, dtype=float, copy=True)
        y = x + t * u
        if not np.all(np.isfinite(y)):
            raise NumericError("retraction produced non-finite values")
        return y

    def egrad_to_rgrad(self, x, egrad):
        _check_shape(egrad, self.shape, "gradient")
        return np.array(egrad, dtype=float, copy=True)

    def transport(self, x_from, x_to, u):
        _check_shape(u, self.shape, "tangent")
        return np.array(u, dtype=float, copy=True)

    def rand_point(self, rng):
        return rng.standard_normal(self.shape)

    def rand_tangent(self, x, rng):
        return rng.standard_normal(self.shape)

    def check_point(self, x):
        _check_shape(x, self.shape, "point")
        if not np.all(np.isfinite(x)):
            raise NumericError("point has non-finite entries")

    def check_tangent(self, x, u):
        _check_shape(u, self.shape, "tangent")


class SPD(_Flat):
    """Symmetric positive-definite ``n x n`` matrices.

    Metric ``<U, V>_X = tr(X^-1 U X^-1 V)``.  The retraction is the
    second-order polynomial ``X + tU + (t^2/2) U X^-1 U``, which equals
    ``X/2 + (X + tU) X^-1 (X + tU) / 2`` and therefore stays positive
    definite for every ``t``.
    """

    def __init__(self, n, jitter=SPD_JITTER, sym_rtol=SYM_RTOL):
        self.n = int(n)
        self.shape = (self.n, self.n)
        self.jitter = jitter
        self.sym_rtol = sym_rtol

    def __repr__(self):
        return f"SPD({self.n})"

    def __eq__(self, other):
        return isinstance(other, SPD) and other.n == self.n

    __hash__ = None

    @property
    def dim(self):
        return self.n * (self.n + 1) // 2

    def _factor(self, x):
        _check_shape(x, self.shape, "point")
        try:
            return cho_factor(x, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise NotSPDError(f"Cholesky factorization failed: {exc}") from None

    def inner(self, x, u, v):
        _check_shape(u, self.shape, "tangent")
        _check_shape(v, self.shape, "tangent")
        cf = self._factor(x)
        a = cho_solve(cf, u)
        b = a if v is u else cho_solve(cf, v)
        return float(np.sum(a * b.T))

    def retract(self, x, u, t=1.0):
        _check_shape(u, self.shape, "tangent")
        if t == 0:
            _check_shape(x, self.shape, "point")
            return np.array(x, dtype=float, copy=True)
        cf = self._factor(x)
        tu = t * u
        y = x + tu + 0.5 * tu @ cho_solve(cf, tu)
        y = sym(y)
        if not np.all(np.isfinite(y)):
            raise NumericError("SPD retraction produced non-finite values")
        return y

    def egrad_to_rgrad(self, x, egrad):
        _check_shape(egrad, self.shape, "gradient")
        return sym(x @ sym(egrad) @ x)

    def transport(self, x_from, x_to, u):
        """``E U E^T`` with ``E = (X_to X_from^-1)^{1/2}``.

        Falls back to the projection ``sym(U)`` when the matrix square root
        cannot be formed reliably.
        """
        _check_shape(u, self.shape, "tangent")
        if x_from is x_to or np.array_equal(x_from, x_to):
            return sym(u)
        try:
            lam, q = np.linalg.eigh(x_from)
            if lam.min() <= 0:
                raise LinAlgError("source not positive definite")
            half = (q * np.sqrt(lam)) @ q.T
            inv_half = (q / np.sqrt(lam)) @ q.T
            m = sym(inv_half @ x_to @ inv_half)
            mu, w = np.linalg.eigh(m)
            if mu.min() <= 0:
                raise LinAlgError("target not positive definite")
            e = half @ ((w * np.sqrt(mu)) @ w.T) @ inv_half
            out = e @ u @ e.T
            if not np.all(np.isfinite(out)):
                raise LinAlgError("non-finite transport")
        except LinAlgError:
            out = u
        return sym(out)

    def rand_point(self, rng):
        a = rng.standard_normal(self.shape)
        return a @ a.T + self.jitter * np.eye(self.n)

    def rand_tangent(self, x, rng):
        return sym(rng.standard_normal(self.shape))

    def zero_tangent(self, x):
        return np.zeros(self.shape)

    def check_point(self, x):
        _check_shape(x, self.shape, "point")
        scale = max(float(np.max(np.abs(x))), np.finfo(float).tiny)
        if np.max(np.abs(x - x.T)) > self.sym_rtol * scale:
            raise NotSPDError("matrix is not symmetric")
        self._factor(x)

    def check_tangent(self, x, u):
        _check_shape(u, self.shape, "tangent")
        scale = max(float(np.max(np.abs(u))), 1.0)
        if np.max(np.abs(u - u.T)) > self.sym_rtol * scale:
            raise DimensionError("SPD tangent is not symmetric")


class SimplexInterior(_Flat):
    """Strictly positive ``k``-vectors summing to one, with the Fisher metric.

    After every retraction entries are clamped to ``floor`` and the vector
    is renormalized, which keeps points away from the boundary where the
    metric degenerates.
    """

    def __init__(self, k, floor=WEIGHT_FLOOR, sum_tol=SYM_RTOL):
        self.k = int(k)
        self.shape = (self.k,)
        self.floor = floor
        self.sum_tol = sum_tol

    def __repr__(self):
        return f"SimplexInterior({self.k})"

    def __eq__(self, other):
        return isinstance(other, SimplexInterior) and other.k == self.k

    __hash__ = None

    @property
    def dim(self):
        return self.k - 1

    def project(self, p):
        """Clamp to ``floor`` and renormalize."""
        p = np.maximum(np.asarray(p, dtype=float), self.floor)
        return p / p.sum()

    def inner(self, x, u, v):
        _check_shape(x, self.shape, "point")
        _check_shape(u, self.shape, "tangent")
        _check_shape(v, self.shape, "tangent")
        return float(np.sum(u * v / x))

    def retract(self, x, u, t=1.0):
        _check_shape(x, self.shape, "point")
        _check_shape(u, self.shape, "tangent")
        if t == 0:
            return np.array(x, dtype=float, copy=True)
        logy = np.log(x) + t * u / x
        if not np.all(np.isfinite(logy)):
            raise NumericError("simplex retraction produced non-finite values")
        y = np.exp(logy - logy.max())
        return self.project(y / y.sum())

    def egrad_to_rgrad(self, x, egrad):
        _check_shape(egrad, self.shape, "gradient")
        g = x * egrad - np.dot(x, egrad) * x
        return g - g.mean()

    def transport(self, x_from, x_to, u):
        _check_shape(u, self.shape, "tangent")
        return u - u.mean()

    def rand_point(self, rng):
        return self.project(rng.dirichlet(np.ones(self.k)))

    def rand_tangent(self, x, rng):
        u = rng.standard_normal(self.k)
        return u - u.mean()

    def check_point(self, x):
        _check_shape(x, self.shape, "point")
        if not np.all(x > 0):
            raise DimensionError("simplex point has non-positive entries")
        if abs(float(np.sum(x)) - 1.0) > self.sum_tol:
            raise DimensionError("simplex point does not sum to one")

    def check_tangent(self, x, u):
        _check_shape(u, self.shape, "tangent")
        if abs(float(np.sum(u))) > self.sum_tol * max(1.0, float(np.max(np.abs(u)))):
            raise DimensionError("simplex tangent does not sum to zero")


class Product(Manifold):
    """Named product of manifolds; points and tangents are dicts."""

    def __init__(self, children):
        children = dict(children)
        if not children:
            raise DimensionError("product manifold needs at least one child")
        for name, child in children.items():
            if not isinstance(name, str) or not name:
                raise DimensionError("product child names must be nonempty strings")
            if not isinstance(child, Manifold):
                raise TypeError(f"child {name!r} is not a Manifold")
        self.children = MappingProxyType(children)

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.children.items())
        return f"Product({inner})"

    def __eq__(self, other):
        return isinstance(other, Product) and dict(other.children) == dict(self.children)

    __hash__ = None

    @property
    def dim(self):
        return sum(c.dim for c in self.children.values())

    def _keys(self, *parts):
        for part in parts:
            if not isinstance(part, dict) or part.keys() != self.children.keys():
                raise DimensionError("product value does not match the child names")

    def inner(self, x, u, v):
        self._keys(x, u, v)
        return sum(c.inner(x[k], u[k], v[k]) for k, c in self.children.items())

    def retract(self, x, u, t=1.0):
        self._keys(x, u)
        return {k: c.retract(x[k], u[k], t) for k, c in self.children.items()}

    def egrad_to_rgrad(self, x, egrad):
        self._keys(x, egrad)
        return {k: c.egrad_to_rgrad(x[k], egrad[k]) for k, c in self.children.items()}

    def transport(self, x_from, x_to, u):
        self._keys(x_from, x_to, u)
        return {k: c.transport(x_from[k], x_to[k], u[k]) for k, c in self.children.items()}

    def rand_point(self, rng):
        return {k: c.rand_point(rng) for k, c in self.children.items()}

    def rand_tangent(self, x, rng):
        self._keys(x)
        return {k: c.rand_tangent(x[k], rng) for k, c in self.children.items()}

    def zero_tangent(self, x):
        self._keys(x)
        return {k: c.zero_tangent(x[k]) for k, c in self.children.items()}

    def lincomb(self, x, a, u, b=0.0, v=None):
        if v is None:
            self._keys(u)
            return {k: c.lincomb(None, a, u[k]) for k, c in self.children.items()}
        self._keys(u, v)
        return {k: c.lincomb(None, a, u[k], b, v[k]) for k, c in self.children.items()}

    def check_point(self, x):
        self._keys(x)
        for k, c in self.children.items():
            c.check_point(x[k])

    def check_tangent(self, x, u):
        self._keys(x, u)
        for k, c in self.children.items():
            c.check_tangent(x[k], u[k])
