"""Reference computations that share no code with the package."""

import math

import numpy as np


def central_difference(f, h=1e-6):
    """Directional derivative of ``f(t)`` at ``t = 0``."""
    return (f(h) - f(-h)) / (2.0 * h)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def gauss_logpdf(x, mu, sigma):
    """Log-density from the textbook formula with an explicit inverse."""
    x = np.asarray(x, float)
    mu = np.asarray(mu, float)
    sigma = np.atleast_2d(sigma)
    d = mu.size
    dev = x - mu
    sign, logdet = np.linalg.slogdet(sigma)
    assert sign > 0
    return -0.5 * (d * math.log(2 * math.pi) + logdet + dev @ np.linalg.inv(sigma) @ dev)


def mixture_logpdf(x, theta):
    """``log sum_j p_j f_j(x)`` summed directly in linear space."""
    total = 0.0
    for p, c in zip(theta.weights, theta.components):
        total += p * math.exp(gauss_logpdf(x, c.mu, c.sigma))
    return math.log(total)


def kahan_sum(values):
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total
