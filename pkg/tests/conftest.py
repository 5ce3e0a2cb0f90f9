"""Shared test oracles and parameter generators.

The oracles here stay independent of the package's simulation/quadrature
paths: the exact OU updater uses the closed-form transition, and random
parameter factories only construct containers.
"""

import numpy as np
import pytest

from powerlaw_sde import DecoupledParams, FullParams


def ou_exact_terminal(h, sigma, eta, eps, horizon, n_paths, seed):
    """Exact-update OU simulator (test oracle): v' = v*exp(-h*eps) + s*xi with
    the exact per-step stationary increment variance."""
    rng = np.random.default_rng(seed)
    decay = np.exp(-h * eps)
    inc_sd = np.sqrt(eta * sigma / (2.0 * h) * (1.0 - np.exp(-2.0 * h * eps)))
    k = int(round(horizon / eps))
    v = np.zeros(n_paths)
    for _ in range(k):
        v = v * decay + inc_sd * rng.standard_normal(n_paths)
    return v


def random_decoupled(rng, d=None, allow_ou=False):
    d = d or int(rng.integers(1, 4))
    h = rng.uniform(0.2, 3.0, d)
    sigma = rng.uniform(0.2, 3.0, d)
    rho = rng.uniform(0.1, 3.0, d)
    if allow_ou and rng.random() < 0.3:
        rho[rng.integers(0, d)] = 0.0
    eta = float(rng.uniform(0.01, 2.0))
    return DecoupledParams(h=h, sigma=sigma, rho=rho, eta=eta)


def random_commuting_full(rng, d=None):
    """FullParams built from one random orthogonal basis and three positive
    spectra: commuting by construction."""
    d = d or int(rng.integers(2, 5))
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    spectra = [np.sort(rng.uniform(0.3, 3.0, d)) for _ in range(3)]
    mats = [(q * s) @ q.T for s in spectra]
    return FullParams(H=mats[0], sigma_g=mats[1], sigma_h=mats[2],
                      w_star=rng.standard_normal(d), eta=float(rng.uniform(0.01, 0.5)))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
