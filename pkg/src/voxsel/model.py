"""The probability model: regression likelihood, Ising prior on the
selection indicators, and a truncated stick-breaking Dirichlet-process
slab that groups the selected coefficients into shared atoms.

The coefficient of voxel j is never stored on its own: it is always
theta[z[j]] where z labels the cluster and theta holds one atom per
cluster, and the effect entering the regression is gamma[j] * theta[z[j]].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .lattice import LatticeGraph

LOG_2PI = math.log(2.0 * math.pi)


class PriorKind(str, enum.Enum):
    """The four prior combinations compared in the benchmark suite.

    The i.i.d. variants are the b = 0 special case of the Ising prior
    (independent Bernoulli indicators with log-odds a); the Gaussian
    variants replace the DP slab with an independent N(0, v^2) slab per
    voxel.
    """

    IID_GAUSSIAN = "iid-gaussian"
    ISING_GAUSSIAN = "ising-gaussian"
    IID_DP = "iid-dp"
    ISING_DP = "ising-dp"

    @property
    def uses_dp(self) -> bool:
        return self in (PriorKind.IID_DP, PriorKind.ISING_DP)

    @property
    def uses_ising(self) -> bool:
        return self in (PriorKind.ISING_GAUSSIAN, PriorKind.ISING_DP)

    @classmethod
    def parse(cls, name) -> "PriorKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown prior {name!r}; choose from "
                + ", ".join(k.value for k in cls)
            ) from None


@dataclass(frozen=True)
class IsingParams:
    """Hyperparameters of the indicator prior: a (sparsity), b (smoothing).

    b >= 0 only (ferromagnetic coupling).  With the symmetric-coupling
    convention, gamma'B gamma counts every selected neighbor pair twice,
    so all closed forms carry 2b per pair; flipping one indicator moves
    the log-prior by a + 2b * (#selected neighbors).
    """

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.a) or not math.isfinite(self.b):
            raise ValidationError("ising parameters must be finite")
        if self.b < 0.0:
            raise ValidationError(f"b must be >= 0, got {self.b}")


@dataclass(frozen=True)
class DPConfig:
    """Truncated stick-breaking configuration.

    H is the truncation level, alpha the precision, v the base-measure
    standard deviation (atoms are drawn from N(0, v^2)).  alpha_update
    is "fixed" (default, value stays at alpha) or "gibbs" (conjugate
    Gamma(1,1)-prior update from the stick proportions).
    """

    H: int = 20
    alpha: float = 1.0
    v: float = 10.0
    alpha_update: str = "fixed"

    def __post_init__(self):
        if self.H < 2:
            raise ValidationError(f"H must be >= 2, got {self.H}")
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if not self.v > 0:
            raise ValidationError(f"v must be > 0, got {self.v}")
        if self.alpha_update not in ("fixed", "gibbs"):
            raise ValidationError(
                f"alpha_update must be 'fixed' or 'gibbs', got {self.alpha_update!r}"
            )


@dataclass(frozen=True)
class Dataset:
    """Response, design matrix, lattice graph, optional simulation truth."""

    y: np.ndarray
    X: np.ndarray
    graph: LatticeGraph
    truth: np.ndarray | None = None

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64).ravel())
        x = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", x)
        if x.ndim != 2:
            raise ValidationError(f"X must be 2-dimensional, got shape {x.shape}")
        n, p = x.shape
        if y.shape[0] != n:
            raise ValidationError(
                f"dimension mismatch: Y has length {y.shape[0]} but X has {n} rows"
            )
        if n < 2:
            raise ValidationError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise ValidationError("need at least 1 predictor")
        _require_finite(y, "Y")
        _require_finite(x, "X")
        if self.graph.p != p:
            raise ValidationError(
                f"dimension mismatch: graph has {self.graph.p} voxels "
                f"but X has {p} columns"
            )
        if self.truth is not None:
            t = np.ascontiguousarray(np.asarray(self.truth, dtype=np.float64).ravel())
            object.__setattr__(self, "truth", t)
            if t.shape[0] != p:
                raise ValidationError(
                    f"dimension mismatch: truth has length {t.shape[0]}, X has {p} columns"
                )
            _require_finite(t, "truth")
            t.flags.writeable = False
        y.flags.writeable = False
        x.flags.writeable = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _require_finite(arr: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = np.argwhere(bad)[0]
        if arr.ndim == 2:
            r, c = int(idx[0]) + 1, int(idx[1]) + 1
            raise ValidationError(f"non-finite entry in {name} at row {r}, column {c}")
        raise ValidationError(f"non-finite entry in {name} at row {int(idx[0]) + 1}")


@dataclass
class ChainState:
    """The full Gibbs state of one chain.

    beta is a view, never stored: beta[j] == theta[z[j]], and the effect
    is eta[j] = gamma[j] * theta[z[j]].  Every voxel carries a cluster
    label, selected or not.  `residual` caches y - X @ eta and is
    refreshed from scratch periodically.
    """

    gamma: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    w: np.ndarray | None
    sigma2: float
    residual: np.ndarray
    w_prime: np.ndarray | None = None
    alpha: float = 1.0
    rho_neighbors: np.ndarray | None = field(default=None, repr=False)

    def beta(self) -> np.ndarray:
        return self.theta[self.z]

    def eta(self) -> np.ndarray:
        return np.where(self.gamma.astype(bool), self.theta[self.z], 0.0)

    def model_size(self) -> int:
        return int(self.gamma.sum())

    def occupied_clusters(self) -> int:
        sel = self.gamma.astype(bool)
        if not sel.any():
            return 0
        return int(np.unique(self.z[sel]).size)

    def copy(self) -> "ChainState":
        return ChainState(
            gamma=self.gamma.copy(),
            z=self.z.copy(),
            theta=self.theta.copy(),
            w=None if self.w is None else self.w.copy(),
            sigma2=self.sigma2,
            residual=self.residual.copy(),
            w_prime=None if self.w_prime is None else self.w_prime.copy(),
            alpha=self.alpha,
        )

    def exact_residual(self, dataset: Dataset) -> np.ndarray:
        return dataset.y - dataset.X @ self.eta()

    def refresh_residual(self, dataset: Dataset) -> None:
        self.residual = self.exact_residual(dataset)

    def validate(self, dataset: Dataset, check_residual: bool = True) -> None:
        p = dataset.p
        if self.gamma.shape != (p,) or self.z.shape != (p,):
            raise ValidationError("invalid state: gamma/z shape mismatch")
        if not np.isin(self.gamma, (0, 1)).all():
            raise ValidationError("invalid state: gamma must be binary")
        h = self.theta.shape[0]
        if self.z.min() < 0 or self.z.max() >= h:
            raise ValidationError("invalid state: cluster label out of range")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValidationError(f"invalid state: sigma2 = {self.sigma2}")
        if self.w is not None:
            if (self.w < 0).any():
                raise ValidationError("invalid state: negative stick weight")
            if abs(float(self.w.sum()) - 1.0) > 1e-12:
                raise ValidationError(
                    f"invalid state: weights sum to {float(self.w.sum())!r}, not 1"
                )
        if check_residual:
            exact = self.exact_residual(dataset)
            err = np.linalg.norm(self.residual - exact)
            if err > 1e-8 * (1.0 + np.linalg.norm(exact)):
                raise ValidationError(
                    f"invalid state: residual cache drifted by {err:.3e}"
                )


def ising_log_prior_unnorm(
    gamma: np.ndarray, params: IsingParams, graph: LatticeGraph
) -> float:
    """Unnormalized Ising log-prior a'gamma + gamma'B gamma.

    Equals a * (#selected) + 2b * (#edges with both endpoints selected);
    the normalizing constant has no closed form and is never needed by
    the sampler.
    """
    g = np.asarray(gamma)
    if g.shape[0] != graph.p:
        raise ValidationError(
            f"gamma length {g.shape[0]} does not match graph size {graph.p}"
        )
    sel = g.astype(bool)
    value = params.a * int(sel.sum())
    if graph.n_edges and params.b != 0.0:
        both = np.logical_and(sel[graph.edges[:, 0]], sel[graph.edges[:, 1]])
        value += 2.0 * params.b * int(both.sum())
    return value


def stick_breaking_weights(w_prime: np.ndarray) -> np.ndarray:
    """Weights w_h = w'_h * prod_{k<h} (1 - w'_k) from stick proportions.

    The truncation convention requires w'_H = 1 so the weights sum to
    one exactly.
    """
    wp = np.asarray(w_prime, dtype=np.float64).ravel()
    if wp.size < 1:
        raise ValidationError("w_prime must be nonempty")
    if (wp < 0).any() or (wp > 1).any():
        raise ValidationError("stick proportions must lie in [0, 1]")
    if wp[-1] != 1.0:
        raise ValidationError(
            f"truncation violation: w'_H must be 1, got {wp[-1]!r}"
        )
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - wp[:-1])))
    return wp * remaining


def log_likelihood(state: ChainState, dataset: Dataset) -> float:
    """Gaussian log-likelihood at the cached residual."""
    if not (state.sigma2 > 0 and math.isfinite(state.sigma2)):
        raise ValidationError(f"invalid state: sigma2 = {state.sigma2}")
    n = dataset.n
    rss = float(state.residual @ state.residual)
    return -0.5 * n * (LOG_2PI + math.log(state.sigma2)) - rss / (2.0 * state.sigma2)
