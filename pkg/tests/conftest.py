import sys

import numpy as np
import pytest

from mixfit import Gaussian, GaussianParams, Mixture, MixtureParams


def benchmark_params():
    """Two-component 1-D model: means (0, 5), standard deviations (1, 2),
    weights (0.8, 0.2)."""
    return MixtureParams(
        (GaussianParams([0.0], [[1.0]]), GaussianParams([5.0], [[4.0]])),
        [0.8, 0.2],
    )


def benchmark_data(seed, n=1000):
    mix = Mixture(Gaussian(1), 2)
    return mix.sample(benchmark_params(), n, np.random.default_rng(seed))


def random_spd(rng, d, floor=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + floor * np.eye(d)


def random_gaussian(rng, d):
    return GaussianParams(rng.standard_normal(d), random_spd(rng, d))


def random_mixture(rng, k, d):
    comps = tuple(random_gaussian(rng, d) for _ in range(k))
    w = rng.dirichlet(np.ones(k)) * 0.8 + 0.2 / k
    return MixtureParams(comps, w / w.sum())


def sym_direction(rng, d):
    e = rng.standard_normal((d, d))
    return 0.5 * (e + e.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
