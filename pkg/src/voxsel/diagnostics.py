"""Posterior summaries and evaluation: inclusion probabilities,
convergence statistics, ROC/AUC, per-variable RMSE, per-sweep R^2, and
rank-heatmap slice data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lattice import LatticeGraph
from .model import Dataset


@dataclass(frozen=True)
class PosteriorSummary:
    """Pooled posterior voxel summaries.

    inclusion_prob[j] is the fraction of kept sweeps selecting voxel j,
    pooled over chains; eta_hat[j] the posterior-mean effect
    gamma_j * theta_{z_j} (zero when unselected); rank[j] the rank of
    inclusion_prob (1 = lowest, ties broken by ascending voxel index).
    """

    inclusion_prob: np.ndarray
    eta_hat: np.ndarray
    rank: np.ndarray
    n_kept: int

    @property
    def p(self) -> int:
        return self.inclusion_prob.shape[0]


def inclusion_probabilities(traces, conditional: bool = False) -> PosteriorSummary:
    """Pool chain traces into a posterior summary.

    Pooling adds counts and effect sums over chains, so equal-length
    chains pool identically to averaging their per-chain probabilities.
    With `conditional`, eta_hat becomes the mean effect given selection
    (zero for never-selected voxels) instead of the unconditional mean.
    """
    traces = [t for t in traces]
    if not traces:
        raise ValidationError("no traces to summarize")
    usable = [t for t in traces if t.kept > 0]
    if not usable:
        raise ValidationError("no kept sweeps in any trace")
    p = usable[0].p
    counts = np.zeros(p, dtype=np.int64)
    eta_sum = np.zeros(p)
    kept = 0
    for t in usable:
        if t.p != p:
            raise ValidationError("traces disagree on the number of voxels")
        counts += t.inclusion_counts
        eta_sum += t.eta_sum
        kept += t.kept
    prob = counts / kept
    if conditional:
        eta_hat = np.divide(
            eta_sum, counts, out=np.zeros(p), where=counts > 0
        )
    else:
        eta_hat = eta_sum / kept
    rank = rank_with_index_ties(prob)
    return PosteriorSummary(
        inclusion_prob=prob, eta_hat=eta_hat, rank=rank, n_kept=kept
    )


def rank_with_index_ties(values: np.ndarray) -> np.ndarray:
    """Ranks 1..p, lowest value gets 1, ties broken by ascending index."""
    values = np.asarray(values)
    p = values.shape[0]
    order = np.lexsort((np.arange(p), values))
    rank = np.empty(p, dtype=np.int64)
    rank[order] = np.arange(1, p + 1)
    return rank


def gelman_rubin(per_chain_series) -> float:
    """Potential scale reduction factor over >= 2 chains.

    With chain length L, W the mean within-chain variance and B the
    between-chain variance of chain means scaled by L, the statistic is
    sqrt((((L - 1) / L) W + B / L) / W).  Chains are truncated to the
    shortest length.  All-identical chains return sqrt((L-1)/L) < 1,
    reported as-is.
    """
    series = [np.asarray(s, dtype=np.float64).ravel() for s in per_chain_series]
    if len(series) < 2:
        raise ValidationError("gelman_rubin needs at least 2 chains")
    length = min(s.shape[0] for s in series)
    if length < 2:
        raise ValidationError("gelman_rubin needs at least 2 values per chain")
    chains = np.stack([s[:length] for s in series])
    within = chains.var(axis=1, ddof=1).mean()
    if within == 0.0:
        raise ValidationError("degenerate series: zero within-chain variance")
    means = chains.mean(axis=1)
    between = length * means.var(ddof=1)
    v_hat = (length - 1) / length * within + between / length
    return float(np.sqrt(v_hat / within))


def roc_curve(inclusion_prob, truth_support) -> tuple[np.ndarray, float]:
    """ROC points and AUC for calling voxels by thresholding a score.

    Thresholds sweep the distinct score values (ties grouped), so the
    trapezoid AUC equals the Mann-Whitney statistic with half credit
    for ties.  Returns (points, auc) with points[:, 0] = FPR,
    points[:, 1] = TPR from (0, 0) to (1, 1).
    """
    scores = np.asarray(inclusion_prob, dtype=np.float64)
    support = np.asarray(truth_support)
    if support.dtype != bool:
        mask = np.zeros(scores.shape[0], dtype=bool)
        mask[support] = True
        support = mask
    n_pos = int(support.sum())
    n_neg = scores.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError(
            "degenerate truth: need at least one positive and one negative"
        )
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = support[order].astype(np.int64)
    # group ties: indices where a threshold ends
    boundary = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    ends = np.concatenate([boundary, [scores.shape[0] - 1]])
    tp = np.cumsum(sorted_pos)[ends]
    fp = (ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return np.stack([fpr, tpr], axis=1), auc


def auc_mann_whitney(scores, support) -> float:
    """Pairwise-comparison AUC: concordant pairs with half credit for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    support = np.asarray(support, dtype=bool)
    pos = scores[support]
    neg = scores[~support]
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("degenerate truth")
    diff = pos[:, None] - neg[None, :]
    wins = (diff > 0).sum() + 0.5 * (diff == 0).sum()
    return float(wins / (pos.size * neg.size))


def rmse_per_variable(eta_hat, truth) -> float:
    """sqrt(mean((eta_hat - truth)^2)) over all p voxels."""
    eta_hat = np.asarray(eta_hat, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if eta_hat.shape != truth.shape:
        raise ValidationError(
            f"length mismatch: {eta_hat.shape} vs {truth.shape}"
        )
    return float(np.sqrt(np.mean((eta_hat - truth) ** 2)))


def r2_trace(trace, dataset: Dataset | None = None, from_states: bool = False):
    """Per-kept-sweep R^2 = 1 - Var(residual) / Var(Y).

    By default returns the series recorded during sampling; with
    `from_states` (needs stored states and the dataset) recomputes each
    value from scratch for verification.
    """
    if not from_states:
        return trace.r2
    if trace.states is None or dataset is None:
        raise ValidationError("recomputation needs stored states and the dataset")
    var_y = float(np.var(dataset.y))
    if var_y == 0.0:
        raise ValidationError("degenerate response: Var(Y) = 0")
    out = np.empty(trace.states["gamma"].shape[0])
    for i in range(out.shape[0]):
        gamma = trace.states["gamma"][i].astype(bool)
        theta = trace.states["theta"][i]
        z = trace.states["z"][i]
        eta = np.where(gamma, theta[z], 0.0)
        resid = dataset.y - dataset.X @ eta
        out[i] = 1.0 - float(np.var(resid)) / var_y
    return out


def voxel_segment_series(traces, j: int) -> list[np.ndarray]:
    """Per-chain series of segment-mean inclusion for one voxel.

    Feeds the convergence diagnostic for per-voxel inclusion without
    storing every sweep's indicator vector.
    """
    out = []
    for t in traces:
        if t.kept == 0 or t.n_segments == 0:
            continue
        seg_sizes = np.diff(
            np.floor(np.arange(t.n_segments + 1) * t.kept / t.n_segments)
        )
        out.append(t.segment_counts[:, j] / np.maximum(seg_sizes, 1))
    return out


def convergence_table(traces, top_k: int = 3) -> dict[str, float]:
    """Gelman-Rubin values for the recorded scalar series and the
    segment-mean inclusion series of the top-k voxels."""
    usable = [t for t in traces if t.kept > 1]
    table: dict[str, float] = {}
    if len(usable) < 2:
        return table
    for name in ("r2", "model_size", "sigma2"):
        series = [getattr(t, name) for t in usable]
        try:
            table[name] = gelman_rubin(series)
        except ValidationError:
            table[name] = float("nan")
    summary = inclusion_probabilities(usable)
    top = np.argsort(-summary.inclusion_prob, kind="stable")[:top_k]
    for j in top:
        series = voxel_segment_series(usable, int(j))
        try:
            table[f"inclusion_voxel_{int(j) + 1}"] = gelman_rubin(series)
        except ValidationError:
            table[f"inclusion_voxel_{int(j) + 1}"] = float("nan")
    return table


def rank_heatmap_slices(
    summary: PosteriorSummary,
    graph: LatticeGraph,
    axis: int,
    slice_indices,
) -> list[np.ndarray]:
    """Rank grids for slices through a 3D lattice.

    axis is 1, 2 or 3 (the coordinate held fixed); each returned grid
    has the remaining two axes in ascending coordinate order, with NaN
    where the mask has no voxel.
    """
    if graph.dim != 3:
        raise ValidationError("rank heatmaps need a 3D graph")
    if axis not in (1, 2, 3):
        raise ValidationError(f"axis must be 1, 2 or 3, got {axis}")
    coords = graph.coords
    others = [k for k in (0, 1, 2) if k != axis - 1]
    max_fixed = int(coords[:, axis - 1].max())
    grids = []
    for s in slice_indices:
        s = int(s)
        if not 1 <= s <= max_fixed:
            raise ValidationError(
                f"slice {s} out of range 1..{max_fixed} on axis {axis}"
            )
        in_slice = coords[:, axis - 1] == s
        rows = coords[in_slice, others[0]]
        cols = coords[in_slice, others[1]]
        grid = np.full(
            (int(coords[:, others[0]].max()), int(coords[:, others[1]].max())),
            np.nan,
        )
        grid[rows - 1, cols - 1] = summary.rank[in_slice]
        grids.append(grid)
    return grids
