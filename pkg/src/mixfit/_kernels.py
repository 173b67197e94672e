"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics.  The numba path is used when numba is
importable, unless ``MIXFIT_DISABLE_JIT`` is set to a truthy value.

``MIXFIT_THREADS`` caps the number of threads the jitted kernels may use.
Parallel kernels only fan out over data columns, and each column's result
is computed independently, so the output does not depend on the thread
count.
"""

import os

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "BACKEND",
    "mahalanobis_sq",
    "log_normalize",
    "weighted_scatter",
    "numpy_kernels",
    "jit_kernels",
]


def _truthy(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


def _thread_cap():
    raw = os.environ.get("MIXFIT_THREADS", "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        return None
    return value if value >= 1 else None


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _mahalanobis_sq_numpy(chol, diff):
    z = solve_triangular(chol, diff, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)


def _log_normalize_numpy(logp):
    top = logp.max(axis=0)
    top = np.where(np.isfinite(top), top, 0.0)
    shifted = np.exp(logp - top)
    total = shifted.sum(axis=0)
    with np.errstate(divide="ignore"):
        lse = top + np.log(total)
    resp = shifted / total
    return lse, resp


def _weighted_scatter_numpy(diff, w):
    return (diff * w) @ diff.T


class _Namespace:
    def __init__(self, **funcs):
        self.__dict__.update(funcs)


numpy_kernels = _Namespace(
    mahalanobis_sq=_mahalanobis_sq_numpy,
    log_normalize=_log_normalize_numpy,
    weighted_scatter=_weighted_scatter_numpy,
)

# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

jit_kernels = None

if not _truthy("MIXFIT_DISABLE_JIT"):
    try:
        import numba
        from numba import njit, prange
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None

    if numba is not None:
        _threads = numba.config.NUMBA_NUM_THREADS
        _cap = _thread_cap()
        if _cap is not None:
            _threads = min(_cap, _threads)
        _parallel = _threads > 1
        if _parallel:
            numba.set_num_threads(_threads)

        @njit(cache=True, parallel=_parallel)
        def _mahalanobis_sq_jit(chol, diff):
            d, n = diff.shape
            out = np.empty(n)
            for j in prange(n):
                z = np.empty(d)
                acc = 0.0
                for i in range(d):
                    s = diff[i, j]
                    for k in range(i):
                        s -= chol[i, k] * z[k]
                    z[i] = s / chol[i, i]
                    acc += z[i] * z[i]
                out[j] = acc
            return out

        @njit(cache=True, parallel=_parallel)
        def _log_normalize_jit(logp):
            k, n = logp.shape
            lse = np.empty(n)
            resp = np.empty((k, n))
            for j in prange(n):
                top = -np.inf
                for i in range(k):
                    if logp[i, j] > top:
                        top = logp[i, j]
                if not np.isfinite(top):
                    top = 0.0
                total = 0.0
                for i in range(k):
                    e = np.exp(logp[i, j] - top)
                    resp[i, j] = e
                    total += e
                for i in range(k):
                    resp[i, j] /= total
                lse[j] = top + np.log(total)
            return lse, resp

        # Serial on purpose: a parallel reduction would make the sum order
        # depend on the thread count.
        @njit(cache=True)
        def _weighted_scatter_jit(diff, w):
            d, n = diff.shape
            out = np.zeros((d, d))
            for j in range(n):
                wj = w[j]
                if wj == 0.0:
                    continue
                for a in range(d):
                    wa = wj * diff[a, j]
                    for b in range(a + 1):
                        out[a, b] += wa * diff[b, j]
            for a in range(d):
                for b in range(a):
                    out[b, a] = out[a, b]
            return out

        def _as_f64(a):
            return np.ascontiguousarray(a, dtype=np.float64)

        def _mahalanobis_sq_dispatch(chol, diff):
            return _mahalanobis_sq_jit(_as_f64(chol), _as_f64(diff))

        def _log_normalize_dispatch(logp):
            return _log_normalize_jit(_as_f64(logp))

        def _weighted_scatter_dispatch(diff, w):
            return _weighted_scatter_jit(_as_f64(diff), _as_f64(w))

        jit_kernels = _Namespace(
            mahalanobis_sq=_mahalanobis_sq_dispatch,
            log_normalize=_log_normalize_dispatch,
            weighted_scatter=_weighted_scatter_dispatch,
        )

_active = jit_kernels if jit_kernels is not None else numpy_kernels
BACKEND = "numba" if jit_kernels is not None else "numpy"

mahalanobis_sq = _active.mahalanobis_sq
mahalanobis_sq.__doc__ = """Squared Mahalanobis norm of each column of ``diff``.

``chol`` is the lower Cholesky factor of the covariance; the result is
``sum((L^{-1} diff)**2, axis=0)``.
"""

log_normalize = _active.log_normalize
log_normalize.__doc__ = """Column-wise log-sum-exp and normalized exponentials.

Returns ``(lse, resp)`` where ``lse[j] = log(sum_i exp(logp[i, j]))`` via the
max-shift trick and ``resp[:, j]`` sums to one.
"""

weighted_scatter = _active.weighted_scatter
weighted_scatter.__doc__ = "Weighted scatter matrix ``sum_j w[j] diff[:, j] diff[:, j]^T``."
