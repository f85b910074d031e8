"""Shared test oracles.

Everything here is implemented from first principles (exhaustive
enumeration, closed-form integrals, quadrature) so the sampler and
diagnostics are checked against routes independent of the code under
test.
"""

import itertools

import numpy as np
import pytest

from voxsel.lattice import build_lattice
from voxsel.model import Dataset


def ising_enum_marginals(graph, a, b):
    """Per-voxel Pr(gamma_j = 1) by summing all 2^p configurations.

    Uses the symmetric-coupling convention: each selected neighbor pair
    contributes 2b.
    """
    p = graph.p
    edges = graph.edges
    log_weights = np.empty(2**p)
    configs = np.array(list(itertools.product((0, 1), repeat=p)), dtype=np.int64)
    for i, g in enumerate(configs):
        pairs = int(np.sum(g[edges[:, 0]] & g[edges[:, 1]])) if edges.size else 0
        log_weights[i] = a * g.sum() + 2.0 * b * pairs
    log_weights -= log_weights.max()
    weights = np.exp(log_weights)
    weights /= weights.sum()
    return configs.T @ weights


def ising_enum_mean_size(graph, a, b):
    marg = ising_enum_marginals(graph, a, b)
    return float(marg.sum())


def batch_means_se(series, n_batches=50):
    """Standard error of the mean of an autocorrelated series via batch means."""
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    n_batches = min(n_batches, n)
    size = n // n_batches
    trimmed = series[: size * n_batches].reshape(n_batches, size)
    means = trimmed.mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def gaussian_model_log_marginal(y, x_gamma, v, sigma2=None):
    """log m(Y | gamma) for the independent N(0, v^2) slab.

    With sigma2 given, the coefficient integral is the closed-form
    Gaussian Y ~ N(0, sigma2 I + v^2 X X').  With sigma2=None the
    implied flat-on-log-scale prior p(sigma2) ~ 1/sigma2 is integrated
    numerically on a dense log grid (the integrand is smooth and
    unimodal, so trapezoid error is negligible at this resolution).
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if x_gamma.shape[1] == 0:
        d = np.zeros(n)
        ytil = y
    else:
        cov = v * v * (x_gamma @ x_gamma.T)
        d, u = np.linalg.eigh(cov)
        d = np.maximum(d, 0.0)
        ytil = u.T @ y

    def log_norm(s2):
        den = s2 + d
        return -0.5 * (n * np.log(2 * np.pi) + np.log(den).sum() + (ytil**2 / den).sum())

    if sigma2 is not None:
        return log_norm(sigma2)
    # integrate exp(log_norm(e^t)) dt over t = log sigma2
    t_peak = np.log(max((ytil**2).mean(), 1e-12))
    ts = np.linspace(t_peak - 40.0, t_peak + 40.0, 6001)
    vals = np.array([log_norm(np.exp(t)) for t in ts])
    m = vals.max()
    return m + np.log(np.trapezoid(np.exp(vals - m), ts))


def gaussian_enum_inclusion(y, x, a, v, sigma2=None):
    """Exact inclusion probabilities for the i.i.d. Bernoulli(logit a) +
    Gaussian-slab model, enumerating all 2^p submodels."""
    p = x.shape[1]
    log_post = np.empty(2**p)
    configs = np.array(list(itertools.product((0, 1), repeat=p)), dtype=np.int64)
    for i, g in enumerate(configs):
        cols = np.flatnonzero(g)
        log_post[i] = a * g.sum() + gaussian_model_log_marginal(
            y, x[:, cols], v, sigma2=sigma2
        )
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    return configs.T @ post


def make_dataset(extents, n, seed=0, signal=None, noise_sd=1.0, dim=None):
    """Small synthetic dataset on a full lattice."""
    rng = np.random.default_rng(seed)
    graph = build_lattice(extents=extents, dim=dim or len(extents))
    x = rng.normal(size=(n, graph.p))
    eta = np.zeros(graph.p)
    if signal:
        for j, val in signal.items():
            eta[j] = val
    y = x @ eta + noise_sd * rng.normal(size=n)
    return Dataset(y=y, X=x, graph=graph, truth=eta if signal else None)


@pytest.fixture(scope="session")
def rng_factory():
    def make(seed):
        return np.random.default_rng(seed)

    return make
