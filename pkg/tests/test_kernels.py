import json
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from mixfit import _kernels

needs_jit = pytest.mark.skipif(_kernels.jit_kernels is None, reason="numba backend disabled")


def _inputs(rng, d=4, n=300, k=5):
    a = rng.standard_normal((d, d))
    chol = cholesky(a @ a.T + d * np.eye(d), lower=True)
    diff = rng.standard_normal((d, n))
    logp = rng.standard_normal((k, n)) * 50
    w = rng.uniform(0, 2, n)
    return chol, diff, logp, w


@pytest.mark.parametrize("ns", ["numpy_kernels", pytest.param("jit_kernels", marks=needs_jit)])
class TestAgainstScipy:
    def test_mahalanobis(self, ns, rng):
        kern = getattr(_kernels, ns)
        chol, diff, _, _ = _inputs(rng)
        z = solve_triangular(chol, diff, lower=True)
        np.testing.assert_allclose(kern.mahalanobis_sq(chol, diff), np.sum(z * z, axis=0), rtol=1e-12)

    def test_log_normalize(self, ns, rng):
        kern = getattr(_kernels, ns)
        _, _, logp, _ = _inputs(rng)
        lse, resp = kern.log_normalize(logp)
        np.testing.assert_allclose(lse, logsumexp(logp, axis=0), rtol=1e-13)
        np.testing.assert_allclose(resp, np.exp(logp - lse), rtol=1e-12, atol=1e-300)

    def test_log_normalize_extreme(self, ns):
        kern = getattr(_kernels, ns)
        lse, resp = kern.log_normalize(np.array([[-1e4, 1e4], [-1e4 - 1.0, -np.inf]]))
        assert lse[0] == pytest.approx(-1e4 + np.log1p(np.exp(-1.0)), rel=1e-15)
        assert lse[1] == 1e4
        np.testing.assert_allclose(resp.sum(axis=0), 1.0)

    def test_scatter(self, ns, rng):
        kern = getattr(_kernels, ns)
        _, diff, _, w = _inputs(rng)
        np.testing.assert_allclose(kern.weighted_scatter(diff, w), (diff * w) @ diff.T, rtol=1e-12)


@needs_jit
def test_backends_agree_on_fortran_input(rng):
    chol, diff, logp, w = _inputs(rng)
    diff_f = np.asfortranarray(diff)
    np.testing.assert_allclose(
        _kernels.jit_kernels.mahalanobis_sq(chol, diff_f),
        _kernels.numpy_kernels.mahalanobis_sq(chol, diff),
        rtol=1e-12,
    )


def _backend_in_subprocess(env_extra):
    env = dict(os.environ, **env_extra)
    code = "import json, mixfit._kernels as k; print(json.dumps(k.BACKEND))"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_env_flag_selects_numpy():
    assert _backend_in_subprocess({"MIXFIT_DISABLE_JIT": "1"}) == "numpy"


def test_default_backend_is_numba():
    env = {k: v for k, v in os.environ.items() if k != "MIXFIT_DISABLE_JIT"}
    code = "import mixfit._kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_fit_identical_across_backends():
    # the full EM trace must not depend on which backend computed it
    code = (
        "import json, numpy as np\n"
        "from mixfit import Gaussian, Mixture, fit, FitOptions\n"
        "x = np.random.default_rng(0).standard_normal((2, 300)); x[:, 150:] += 4\n"
        "r = fit(Mixture(Gaussian(2), 2), x, FitOptions(max_iters=50))\n"
        "print(json.dumps(r.ll_trace))\n"
    )
    traces = []
    for flag in ("0", "1"):
        env = dict(os.environ, MIXFIT_DISABLE_JIT=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        traces.append(json.loads(out.stdout))
    np.testing.assert_allclose(traces[0], traces[1], rtol=1e-11)


def test_thread_cap_is_deterministic():
    code = (
        "import json, numpy as np\n"
        "from mixfit import Gaussian, Mixture, fit, FitOptions\n"
        "x = np.random.default_rng(1).standard_normal((1, 500)); x[:, 250:] += 5\n"
        "print(json.dumps(fit(Mixture(Gaussian(1), 2), x, FitOptions(max_iters=30)).ll_trace))\n"
    )
    outs = []
    for threads in ("1", "4"):
        env = dict(os.environ, MIXFIT_THREADS=threads)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert outs[0] == outs[1]
