"""Blocked Gibbs sampler for spike-and-slab selection with the four
prior combinations (i.i.d./Ising indicators x Gaussian/DP slabs).

One sweep updates, in order: the selection indicators one voxel at a
time in a fresh random order, then (DP priors) the cluster labels, the
cluster atoms, the stick-breaking weights and optionally the DP
precision, and finally the noise variance.  Gaussian-slab priors reuse
the cluster machinery with every voxel as its own singleton cluster, so
all four priors share one harness.

Chains are deterministic functions of (seed, chain_id): every random
draw comes from a Generator seeded with SeedSequence(seed,
spawn_key=(chain_id,)), and the compiled kernels receive pre-drawn
arrays, so reruns are bit-identical and independent of scheduling.

A `prior_only` switch removes the likelihood contribution from every
conditional, making the sweep target the prior itself; this exists for
the enumeration-based correctness checks.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericalError, ValidationError
from .model import (
    ChainState,
    Dataset,
    DPConfig,
    IsingParams,
    PriorKind,
    stick_breaking_weights,
)

_RATE_FLOOR = 1e-300


@dataclass(frozen=True)
class SamplerConfig:
    """Everything a chain needs besides the data.

    iterations is the total sweep count, burn_in the number discarded;
    thin applies to stored full states only (scalar series are recorded
    every kept sweep).  sigma2_prior adds an optional proper
    Inv-Gamma(a0, b0) prior on the noise variance; the default (0, 0)
    keeps the flat-on-log-scale conditional Inv-Gamma(n/2, rss/2).
    """

    ising: IsingParams
    prior: PriorKind = PriorKind.ISING_DP
    dp: DPConfig = DPConfig()
    iterations: int = 20_000
    burn_in: int = 10_000
    n_chains: int = 4
    seed: int = 0
    thin: int = 10
    recompute_interval: int = 1000
    store_states: bool = False
    prior_only: bool = False
    beta_jacobi: bool = False
    sigma2_prior: tuple[float, float] = (0.0, 0.0)
    n_segments: int = 20
    workers: int | None = None
    validate_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prior", PriorKind.parse(self.prior))
        if self.iterations < 0 or self.burn_in < 0:
            raise ValidationError("iterations and burn_in must be >= 0")
        if self.burn_in > self.iterations:
            raise ValidationError(
                f"burn_in ({self.burn_in}) must not exceed iterations ({self.iterations})"
            )
        if self.n_chains < 1:
            raise ValidationError("n_chains must be >= 1")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if self.recompute_interval < 1:
            raise ValidationError("recompute_interval must be >= 1")
        if not self.prior.uses_ising and self.ising.b != 0.0:
            raise ValidationError(
                f"prior {self.prior.value} is i.i.d.: requires b = 0, got b = {self.ising.b}"
            )
        a0, b0 = self.sigma2_prior
        if a0 < 0 or b0 < 0:
            raise ValidationError("sigma2_prior components must be >= 0")


@dataclass
class ChainTrace:
    """Post-burn-in record of one chain.

    inclusion_counts[j] counts kept sweeps with voxel j selected;
    eta_sum[j] accumulates gamma_j * theta[z_j] so that eta_sum / kept
    is the posterior-mean effect.  segment_counts splits the kept
    sweeps into n_segments consecutive blocks for convergence
    diagnostics on per-voxel inclusion series.  states holds thinned
    full states when requested.
    """

    chain_id: int
    p: int
    iterations: int
    burn_in: int
    kept: int
    inclusion_counts: np.ndarray
    eta_sum: np.ndarray
    r2: np.ndarray
    model_size: np.ndarray
    n_clusters: np.ndarray
    sigma2: np.ndarray
    segment_counts: np.ndarray
    states: dict | None = None
    status: str = "ok"
    error: str | None = None
    elapsed: float = 0.0
    seed: int | None = None

    @property
    def n_segments(self) -> int:
        return self.segment_counts.shape[0]

    def inclusion_prob(self) -> np.ndarray:
        if self.kept == 0:
            return np.zeros(self.p)
        return self.inclusion_counts / self.kept

    def seconds_per_1000_sweeps(self) -> float:
        if self.iterations == 0:
            return 0.0
        return 1000.0 * self.elapsed / self.iterations


@dataclass
class _Workspace:
    """Per-dataset precomputation shared by every chain (read-only)."""

    xt: np.ndarray
    col_ss: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    y: np.ndarray
    var_y: float
    order_buf: np.ndarray = field(repr=False, default=None)
    logp_buf: np.ndarray = field(repr=False, default=None)
    xh_buf: np.ndarray = field(repr=False, default=None)
    acc_buf: np.ndarray = field(repr=False, default=None)


def get_workspace(dataset: Dataset) -> _Workspace:
    ws = getattr(dataset, "_voxsel_workspace", None)
    if ws is not None:
        return ws
    xt = np.ascontiguousarray(dataset.X.T)
    ws = _Workspace(
        xt=xt,
        col_ss=np.einsum("ij,ij->i", xt, xt),
        indptr=dataset.graph.indptr,
        indices=dataset.graph.indices,
        y=dataset.y,
        var_y=float(np.var(dataset.y)),
        order_buf=np.empty(dataset.p, dtype=np.int64),
        logp_buf=np.empty(max(dataset.p, 64), dtype=np.float64),
        xh_buf=np.empty(dataset.n, dtype=np.float64),
        acc_buf=np.empty(dataset.n, dtype=np.float64),
    )
    object.__setattr__(dataset, "_voxsel_workspace", ws)
    return ws


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def init_state(dataset: Dataset, config: SamplerConfig, rng: np.random.Generator) -> ChainState:
    """Draw the chain's starting point.

    gamma_j ~ Bernoulli(sigmoid(a)) (prior-consistent, sparse), atoms
    from the base measure, labels from freshly drawn stick weights, and
    sigma^2 at the sample variance of Y.
    """
    p = dataset.p
    gamma = (rng.random(p) < _sigmoid(config.ising.a)).astype(np.uint8)
    if config.prior.uses_dp:
        h = config.dp.H
        w_prime = np.empty(h)
        w_prime[: h - 1] = rng.beta(1.0, config.dp.alpha, size=h - 1)
        w_prime[h - 1] = 1.0
        w = stick_breaking_weights(w_prime)
        theta = rng.normal(0.0, config.dp.v, size=h)
        z = np.searchsorted(np.cumsum(w), rng.random(p), side="right")
        z = np.minimum(z, h - 1).astype(np.int64)
    else:
        w = None
        w_prime = None
        theta = rng.normal(0.0, config.dp.v, size=p)
        z = np.arange(p, dtype=np.int64)
    var_y = float(np.var(dataset.y))
    state = ChainState(
        gamma=gamma,
        z=z,
        theta=theta,
        w=w,
        sigma2=var_y if var_y > 0 else 1.0,
        residual=np.empty(dataset.n),
        w_prime=w_prime,
        alpha=config.dp.alpha,
    )
    state.refresh_residual(dataset)
    return state


def _neighbor_cache(state: ChainState, ws: _Workspace) -> np.ndarray:
    if state.rho_neighbors is None:
        counts = np.empty(state.gamma.shape[0], dtype=np.int64)
        _kernels.neighbor_counts(state.gamma, ws.indptr, ws.indices, counts)
        state.rho_neighbors = counts
    return state.rho_neighbors


def update_gamma_sweep(
    state: ChainState,
    dataset: Dataset,
    params: IsingParams,
    rng: np.random.Generator,
    likelihood: bool = True,
) -> ChainState:
    """Resample every indicator once, in a fresh uniform-random order.

    Consumes two uniform(p) blocks from the generator: one driving the
    visit order, one driving the flips.
    """
    ws = get_workspace(dataset)
    ncount = _neighbor_cache(state, ws)
    u_order = rng.random(dataset.p)
    u_flip = rng.random(dataset.p)
    # evaluate u < sigmoid(logit) as logit > logit(u); vectorized here,
    # branch-only in the kernel (u = 0 gives -inf, which always selects)
    with np.errstate(divide="ignore"):
        logit_u = np.log(u_flip) - np.log1p(-u_flip)
    bad = _kernels.gamma_sweep(
        state.gamma, state.z, state.theta, state.residual,
        ws.xt, ws.col_ss, ws.indptr, ws.indices, ncount,
        params.a, 2.0 * params.b, state.sigma2,
        u_order, logit_u, likelihood, ws.order_buf,
    )
    if bad >= 0:
        raise NumericalError(
            f"non-finite selection log-odds at voxel {bad + 1} "
            f"(sigma2={state.sigma2!r})"
        )
    return state


def update_z(
    state: ChainState,
    dataset: Dataset,
    dp: DPConfig,
    rng: np.random.Generator,
    likelihood: bool = True,
    counts_out: np.ndarray | None = None,
) -> ChainState:
    """Redraw every cluster label.

    Unselected voxels draw directly from the stick weights (their label
    does not enter the likelihood); selected voxels weight each atom by
    the likelihood of swapping it in, computed from the cached residual.
    Consumes one uniform(p) block.  `counts_out` (length H) receives the
    fresh per-atom label counts for the weights update.
    """
    if state.w is None:
        raise ValidationError("update_z requires a DP state (stick weights present)")
    ws = get_workspace(dataset)
    u = rng.random(dataset.p)
    cum = np.cumsum(state.w)
    with np.errstate(divide="ignore"):
        logw = np.log(state.w)
    if counts_out is None:
        counts_out = np.empty(state.w.shape[0], dtype=np.int64)
    bad = _kernels.z_sweep(
        state.gamma, state.z, state.theta, state.residual,
        ws.xt, ws.col_ss, logw, cum, state.sigma2,
        u, likelihood, ws.logp_buf, counts_out,
    )
    if bad >= 0:
        raise NumericalError(
            f"all cluster log-probabilities vanished at voxel {bad + 1}"
        )
    return state


def update_beta_clusters(
    state: ChainState,
    dataset: Dataset,
    dp: DPConfig,
    rng: np.random.Generator,
    likelihood: bool = True,
    jacobi: bool = False,
) -> ChainState:
    """Redraw the atoms theta_h from their conjugate normal conditionals.

    Implemented as partial-residual regression: cluster h's contribution
    is added back to the cached residual, the summed member column is
    regressed on it, and the residual is re-subtracted with the new
    atom.  Empty clusters draw from the N(0, v^2) base measure.
    Consumes one standard-normal(H) block.
    """
    ws = get_workspace(dataset)
    eps = rng.standard_normal(state.theta.shape[0])
    _kernels.beta_cluster_sweep(
        state.gamma, state.z, state.theta, state.residual,
        ws.xt, state.sigma2, dp.v * dp.v, eps,
        likelihood, jacobi, ws.xh_buf, ws.acc_buf,
    )
    return state


def update_weights(
    state: ChainState,
    dp: DPConfig,
    rng: np.random.Generator,
    counts: np.ndarray | None = None,
) -> ChainState:
    """Redraw the stick proportions from their Beta conditionals.

    w'_h ~ Beta(1 + #{z = h}, alpha + #{z > h}) for h < H, w'_H = 1,
    then the weights are rebuilt by stick breaking.  `counts` may carry
    precomputed label counts (all p voxels, length H).
    """
    if state.w is None:
        raise ValidationError("update_weights requires a DP state")
    h = state.w.shape[0]
    if counts is None:
        counts = np.bincount(state.z, minlength=h)
    w_prime = np.empty(h)
    w = np.empty(h)
    _kernels.weights_update(
        rng, counts.astype(np.int64), state.z.shape[0], state.alpha, w, w_prime
    )
    state.w_prime = w_prime
    state.w = w
    return state


def update_alpha(state: ChainState, dp: DPConfig, rng: np.random.Generator) -> ChainState:
    """Conjugate Gamma update of the DP precision under its Gamma(1,1) prior.

    Given the stick proportions, alpha | w' ~ Gamma(1 + (H-1),
    1 - sum_h log(1 - w'_h)); only meaningful when alpha_update="gibbs".
    """
    if state.w_prime is None:
        raise ValidationError("update_alpha requires stick proportions")
    wp = np.minimum(state.w_prime[:-1], 1.0 - 1e-16)
    rate = 1.0 - float(np.log1p(-wp).sum())
    shape = 1.0 + (state.w_prime.shape[0] - 1)
    state.alpha = float(rng.gamma(shape) / rate)
    return state


def update_sigma2(
    state: ChainState,
    dataset: Dataset,
    rng: np.random.Generator,
    prior: tuple[float, float] = (0.0, 0.0),
) -> ChainState:
    """Draw sigma^2 ~ Inv-Gamma(n/2 + a0, rss/2 + b0).

    The default (a0, b0) = (0, 0) is the conditional implied by the
    regression likelihood alone; the rate is floored to keep the draw
    defined at a degenerate perfect fit.
    """
    n = dataset.n
    rss = float(state.residual @ state.residual)
    shape = 0.5 * n + prior[0]
    rate = max(0.5 * rss + prior[1], _RATE_FLOOR)
    g = rng.gamma(shape)
    state.sigma2 = float(rate / max(g, _RATE_FLOOR))
    return state


def gibbs_sweep(
    state: ChainState,
    dataset: Dataset,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> ChainState:
    """One full sweep over all parameter blocks."""
    lik = not config.prior_only
    update_gamma_sweep(state, dataset, config.ising, rng, likelihood=lik)
    if config.prior.uses_dp:
        zcounts = np.empty(config.dp.H, dtype=np.int64)
        update_z(state, dataset, config.dp, rng, likelihood=lik, counts_out=zcounts)
        update_beta_clusters(
            state, dataset, config.dp, rng, likelihood=lik, jacobi=config.beta_jacobi
        )
        update_weights(state, config.dp, rng, counts=zcounts)
        if config.dp.alpha_update == "gibbs":
            update_alpha(state, config.dp, rng)
    else:
        update_beta_clusters(
            state, dataset, config.dp, rng, likelihood=lik, jacobi=config.beta_jacobi
        )
    if lik:
        update_sigma2(state, dataset, rng, prior=config.sigma2_prior)
    return state


def chain_rng(seed: int, chain_id: int) -> np.random.Generator:
    """The chain's private generator; streams never overlap across ids."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain_id,)))


def run_chain(dataset: Dataset, config: SamplerConfig, chain_id: int = 0) -> ChainTrace:
    """Run one chain and collect its post-burn-in trace.

    A failing sweep (non-finite log-odds) ends the chain early; the
    partial trace is returned with status "failed" rather than raising,
    so sibling chains are unaffected.
    """
    rng = chain_rng(config.seed, chain_id)
    state = init_state(dataset, config, rng)
    p = dataset.p
    kept_total = config.iterations - config.burn_in
    n_segments = max(1, min(config.n_segments, kept_total)) if kept_total else 0
    counts = np.zeros(p, dtype=np.int64)
    eta_sum = np.zeros(p)
    seg_counts = np.zeros((n_segments, p), dtype=np.int64)
    r2 = np.zeros(kept_total)
    model_size = np.zeros(kept_total, dtype=np.int32)
    n_clusters = np.zeros(kept_total, dtype=np.int32)
    sigma2 = np.zeros(kept_total)
    states = (
        {"gamma": [], "z": [], "theta": [], "w": [], "sigma2": []}
        if config.store_states
        else None
    )
    ws = get_workspace(dataset)
    status, error = "ok", None
    kept = 0
    t0 = time.perf_counter()
    try:
        for sweep in range(config.iterations):
            gibbs_sweep(state, dataset, config, rng)
            if (sweep + 1) % config.recompute_interval == 0:
                state.refresh_residual(dataset)
            if config.validate_every and (sweep + 1) % config.validate_every == 0:
                state.validate(dataset)
            if sweep < config.burn_in:
                continue
            sel = state.gamma.astype(bool)
            counts += sel
            eta_sum[sel] += state.theta[state.z[sel]]
            seg = kept * n_segments // kept_total
            seg_counts[seg] += sel
            r2[kept] = 1.0 - float(np.var(state.residual)) / ws.var_y
            model_size[kept] = state.model_size()
            n_clusters[kept] = state.occupied_clusters()
            sigma2[kept] = state.sigma2
            if states is not None and kept % config.thin == 0:
                states["gamma"].append(state.gamma.copy())
                states["z"].append(state.z.copy())
                states["theta"].append(state.theta.copy())
                states["w"].append(
                    state.w.copy() if state.w is not None else np.empty(0)
                )
                states["sigma2"].append(state.sigma2)
            kept += 1
    except NumericalError as exc:
        status, error = "failed", str(exc)
    elapsed = time.perf_counter() - t0
    if states is not None:
        states = {k: np.array(v) for k, v in states.items()}
    return ChainTrace(
        chain_id=chain_id,
        p=p,
        iterations=config.iterations,
        burn_in=config.burn_in,
        kept=kept,
        inclusion_counts=counts,
        eta_sum=eta_sum,
        r2=r2[:kept],
        model_size=model_size[:kept],
        n_clusters=n_clusters[:kept],
        sigma2=sigma2[:kept],
        segment_counts=seg_counts,
        states=states,
        status=status,
        error=error,
        elapsed=elapsed,
        seed=config.seed,
    )


def _run_chain_star(args):
    return run_chain(*args)


def run_parallel(dataset: Dataset, config: SamplerConfig) -> list[ChainTrace]:
    """Run config.n_chains chains, concurrently when workers allow.

    Results are ordered by chain_id and identical to a serial run; a
    chain that dies (worker crash) is reported as a failed trace without
    aborting the others.
    """
    ids = list(range(config.n_chains))
    workers = config.workers
    if workers is None:
        env = os.environ.get("VOXSEL_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = max(1, min(workers, config.n_chains))
    if workers == 1 or config.n_chains == 1:
        return [run_chain(dataset, config, i) for i in ids]
    traces: list[ChainTrace | None] = [None] * config.n_chains
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_run_chain_star, (dataset, config, i)): i for i in ids
        }
        for fut, i in futures.items():
            try:
                traces[i] = fut.result()
            except Exception as exc:  # worker crash: report, keep going
                traces[i] = _failed_trace(dataset, config, i, repr(exc))
    return traces


def _failed_trace(dataset, config, chain_id, message) -> ChainTrace:
    p = dataset.p
    return ChainTrace(
        chain_id=chain_id, p=p, iterations=config.iterations,
        burn_in=config.burn_in, kept=0,
        inclusion_counts=np.zeros(p, dtype=np.int64), eta_sum=np.zeros(p),
        r2=np.empty(0), model_size=np.empty(0, dtype=np.int32),
        n_clusters=np.empty(0, dtype=np.int32), sigma2=np.empty(0),
        segment_counts=np.zeros((0, p), dtype=np.int64),
        status="failed", error=message, seed=config.seed,
    )


# ---------------------------------------------------------------------------
# Readable single-voxel conditionals.  These recompute the same
# quantities as the kernels from the definitions and exist for tests
# and debugging; the enumeration suites check the compiled path against
# them end to end.

def gamma_conditional(
    state: ChainState,
    dataset: Dataset,
    params: IsingParams,
    j: int,
    likelihood: bool = True,
) -> float:
    """Pr(gamma_j = 1 | everything else) from the cached residual."""
    ws = get_workspace(dataset)
    s = int(state.gamma[dataset.graph.neighbors(j)].sum())
    logit = params.a + 2.0 * params.b * s
    bj = float(state.theta[state.z[j]])
    if likelihood and bj != 0.0 and ws.col_ss[j] > 0.0:
        dot = float(state.residual @ ws.xt[j])
        sign = 1.0 if state.gamma[j] == 1 else -1.0
        logit += (2.0 * bj * dot + sign * bj * bj * ws.col_ss[j]) / (2.0 * state.sigma2)
    return _sigmoid(logit)


def z_conditional(
    state: ChainState, dataset: Dataset, j: int, likelihood: bool = True
) -> np.ndarray:
    """Pr(z_j = h | everything else) for all h."""
    if state.w is None:
        raise ValidationError("z_conditional requires a DP state")
    if state.gamma[j] == 0 or not likelihood:
        return state.w.copy()
    ws = get_workspace(dataset)
    th_old = state.theta[state.z[j]]
    dot = float(state.residual @ ws.xt[j])
    ss = float(ws.col_ss[j])
    d = state.theta - th_old
    with np.errstate(divide="ignore"):
        logp = np.log(state.w) - (d * d * ss - 2.0 * d * dot) / (2.0 * state.sigma2)
    logp -= logp.max()
    probs = np.exp(logp)
    return probs / probs.sum()


def beta_posterior_params(
    state: ChainState, dataset: Dataset, dp: DPConfig, h: int
) -> tuple[float, float]:
    """(mu_h, S_h) of the atom's conditional, from the definitions."""
    members = np.flatnonzero((state.z == h) & (state.gamma == 1))
    v2 = dp.v * dp.v
    if members.size == 0:
        return 0.0, 1.0 / v2
    xh = dataset.X[:, members].sum(axis=1)
    partial = state.residual + state.theta[h] * xh
    s_h = float(xh @ xh) / state.sigma2 + 1.0 / v2
    mu_h = float(partial @ xh) / state.sigma2 / s_h
    return mu_h, s_h
