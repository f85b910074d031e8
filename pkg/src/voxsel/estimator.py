"""scikit-learn style front end.

`IsingDPRegressor` wraps graph construction, hyperparameter bound
computation, multi-chain sampling and posterior summarization behind
the usual fit/predict surface, so the selector drops into sklearn
pipelines, `cross_val_score`, `clone`, and friends.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .diagnostics import convergence_table, inclusion_probabilities
from .errors import ValidationError
from .hyperbounds import BoundsInput, compute_bounds, max_simple_r2, recommend_ab
from .lattice import build_lattice, isolated_graph
from .model import Dataset, DPConfig, IsingParams, PriorKind
from .sampler import SamplerConfig, run_parallel


def check_X_y(X, y):
    """Minimal input validation: 2D finite X, matching finite y."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-dimensional, got shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise ValidationError(
            f"dimension mismatch: X has {X.shape[0]} rows, y has {y.shape[0]}"
        )
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValidationError("X and y must be finite")
    return X, y


class IsingDPRegressor(RegressorMixin, BaseEstimator):
    """Bayesian voxel selection and effect estimation on a lattice.

    Parameters
    ----------
    prior : str
        One of "ising-dp", "iid-dp", "ising-gaussian", "iid-gaussian".
    a, b : float or None
        Indicator-prior hyperparameters.  Leave None to derive them
        from the phase-transition bounds (using `pi`, `r2`, `margin`);
        i.i.d. priors force b = 0.
    extents : tuple or None
        Full-box lattice sizes; alternatively pass explicit 1-based
        `coords` (p x dim).  Spatial priors require one of the two.
    pi : float
        Target selected fraction used by the bound computation.
    r2 : float or "data"
        Expected regression R^2 for the bounds; "data" estimates it as
        the best single-predictor R^2.
    margin : float
        Interior margin for the recommended (a, b).
    H, alpha, v : DP truncation level, precision, and slab/base scale.
    iterations, burn_in, n_chains, thin, seed, workers : sampling
        protocol; see SamplerConfig.

    Attributes (after fit)
    ----------------------
    a_, b_ : hyperparameters actually used.
    region_ : HyperRegion or None if (a, b) were given.
    inclusion_prob_, eta_hat_, rank_ : posterior voxel summaries.
    traces_ : per-chain ChainTrace list.
    convergence_ : Gelman-Rubin table (needs >= 2 chains).
    """

    def __init__(
        self,
        prior="ising-dp",
        a=None,
        b=None,
        extents=None,
        coords=None,
        pi=0.05,
        r2="data",
        margin=0.1,
        bounds_mode="relaxed",
        H=20,
        alpha=1.0,
        v=10.0,
        alpha_update="fixed",
        iterations=4000,
        burn_in=2000,
        n_chains=2,
        thin=10,
        seed=0,
        workers=None,
        store_states=False,
    ):
        self.prior = prior
        self.a = a
        self.b = b
        self.extents = extents
        self.coords = coords
        self.pi = pi
        self.r2 = r2
        self.margin = margin
        self.bounds_mode = bounds_mode
        self.H = H
        self.alpha = alpha
        self.v = v
        self.alpha_update = alpha_update
        self.iterations = iterations
        self.burn_in = burn_in
        self.n_chains = n_chains
        self.thin = thin
        self.seed = seed
        self.workers = workers
        self.store_states = store_states

    def _build_graph(self, p):
        kind = PriorKind.parse(self.prior)
        if self.coords is not None:
            graph = build_lattice(coords=np.asarray(self.coords))
        elif self.extents is not None:
            extents = tuple(self.extents)
            graph = build_lattice(extents=extents, dim=len(extents))
        elif kind.uses_ising:
            raise ValidationError(
                "spatial priors need voxel geometry: pass extents or coords"
            )
        else:
            graph = isolated_graph(p)
        if graph.p != p:
            raise ValidationError(
                f"graph has {graph.p} voxels but X has {p} columns"
            )
        return graph

    def _resolve_ab(self, dataset):
        kind = PriorKind.parse(self.prior)
        if not kind.uses_ising:
            if self.a is None:
                raise ValidationError("i.i.d. priors need an explicit `a` (log-odds)")
            return float(self.a), 0.0, None
        if self.a is not None and self.b is not None:
            return float(self.a), float(self.b), None
        r2 = max_simple_r2(dataset) if self.r2 == "data" else float(self.r2)
        dim = dataset.graph.dim
        mode = self.bounds_mode if dim == 3 else "expected-r2"
        region = compute_bounds(
            BoundsInput(
                n=dataset.n, p=dataset.p, dim=dim, pi=self.pi, r2=r2, mode=mode
            )
        )
        a, b = recommend_ab(region, margin=self.margin)
        if self.a is not None:
            a = float(self.a)
        if self.b is not None:
            b = float(self.b)
        return a, b, region

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        graph = self._build_graph(X.shape[1])
        dataset = Dataset(y=y, X=X, graph=graph)
        a, b, region = self._resolve_ab(dataset)
        config = SamplerConfig(
            ising=IsingParams(a=a, b=b),
            prior=PriorKind.parse(self.prior),
            dp=DPConfig(
                H=self.H, alpha=self.alpha, v=self.v, alpha_update=self.alpha_update
            ),
            iterations=self.iterations,
            burn_in=self.burn_in,
            n_chains=self.n_chains,
            seed=self.seed,
            thin=self.thin,
            workers=self.workers,
            store_states=self.store_states,
        )
        traces = run_parallel(dataset, config)
        failed = [t for t in traces if t.status != "ok"]
        if len(failed) == len(traces):
            raise ValidationError(
                f"all chains failed; first error: {failed[0].error}"
            )
        summary = inclusion_probabilities([t for t in traces if t.kept > 0])
        self.n_features_in_ = X.shape[1]
        self.graph_ = graph
        self.dataset_ = dataset
        self.a_, self.b_ = a, b
        self.region_ = region
        self.config_ = config
        self.traces_ = traces
        self.summary_ = summary
        self.inclusion_prob_ = summary.inclusion_prob
        self.eta_hat_ = summary.eta_hat
        self.rank_ = summary.rank
        self.convergence_ = convergence_table(traces)
        return self

    def predict(self, X):
        if not hasattr(self, "eta_hat_"):
            raise ValidationError("estimator is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X must have {self.n_features_in_} columns, got shape {X.shape}"
            )
        return X @ self.eta_hat_

    def selected_voxels(self, threshold=0.5):
        """Indices (0-based) of voxels whose inclusion probability
        exceeds the calling threshold."""
        if not hasattr(self, "inclusion_prob_"):
            raise ValidationError("estimator is not fitted")
        return np.flatnonzero(self.inclusion_prob_ > threshold)
