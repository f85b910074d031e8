"""Admissible (a, b) regions for the Ising prior that avoid phase transition.

The selected fraction of a lattice Ising model jumps from near-none to
near-all at certain hyperparameter combinations, which cripples MCMC
mixing.  The bounds here intersect two requirements on the conditional
log-density evaluated on a fully selected square/cube of side V:

* decay: the density must fall as larger blocks get selected
  (2D: a + 8b < 0; 3D: the quadratic form at V_max = floor(p^(1/3))
  must be negative), and
* escape from the null model: selecting the target-sparsity block must
  beat selecting nothing, i.e. the quadratic form must exceed
  -n R^2 / (2 (1 - R^2)).

Both boundary curves are affine in (a, b), so a region is reported as
two affine functions a_lower(b) < a < a_upper(b) with the b where they
cross as b_max.  Strict inequalities are evaluated in double precision
with a 1e-9 slack so boundary membership is reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleRegionError, ValidationError
from .lattice import pair_count_cube, pair_count_square

SLACK = 1e-9

MODE_EXPECTED_R2 = "expected-r2"
MODE_DATA_R2 = "data-r2"
MODE_RELAXED = "relaxed"
_MODES = (MODE_EXPECTED_R2, MODE_DATA_R2, MODE_RELAXED)


@dataclass(frozen=True)
class BoundsInput:
    """Inputs of a bound computation.

    pi is the target fraction of selected predictors; r2 is either a
    prespecified expectation or (mode "data-r2") the maximum simple
    linear-regression R^2 computed from data before calling in here.
    """

    n: int
    p: int
    dim: int
    pi: float
    r2: float
    mode: str = MODE_EXPECTED_R2

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValidationError(f"dim must be 2 or 3, got {self.dim}")
        if not 0.0 < self.pi < 1.0:
            raise ValidationError(f"pi must be in (0, 1), got {self.pi}")
        if not 0.0 < self.r2 < 1.0:
            raise ValidationError(f"r2 must be in (0, 1), got {self.r2}")
        if self.n < 2 or self.p < 2:
            raise ValidationError("need n >= 2 and p >= 2")
        if self.mode not in _MODES:
            raise ValidationError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class HyperRegion:
    """A feasible (a, b) region: a_lower(b) < a < a_upper(b), 0 < b < b_max.

    a_lower and a_upper are (intercept, slope) pairs; rhs is the value
    -n R^2 / (2 (1 - R^2)) anchoring the null-model escape bound.
    """

    dim: int
    mode: str
    v: int
    v_max: int | None
    rhs: float
    b_max: float
    a_lower: tuple[float, float]
    a_upper: tuple[float, float]

    def a_lower_at(self, b: float) -> float:
        return self.a_lower[0] + self.a_lower[1] * b

    def a_upper_at(self, b: float) -> float:
        return self.a_upper[0] + self.a_upper[1] * b

    def contains(self, a: float, b: float, slack: float = SLACK) -> bool:
        if not (0.0 < b < self.b_max + slack):
            return False
        return self.a_lower_at(b) - slack <= a <= self.a_upper_at(b) + slack

    def violated_inequalities(self, a: float, b: float) -> list[str]:
        """Human-readable list of the constraints (a, b) fails."""
        out = []
        if b <= 0.0:
            out.append(f"b > 0 violated: b = {b}")
        if b >= self.b_max + SLACK:
            out.append(f"b < {self.b_max:.6g} violated: b = {b}")
        lo, hi = self.a_lower_at(b), self.a_upper_at(b)
        if a < lo - SLACK:
            out.append(
                f"a > {self.a_lower[0]:.6g} + ({self.a_lower[1]:.6g})*b "
                f"violated: a = {a}, bound = {lo:.6g}"
            )
        if a > hi + SLACK:
            out.append(
                f"a < {self.a_upper[0]:.6g} + ({self.a_upper[1]:.6g})*b "
                f"violated: a = {a}, bound = {hi:.6g}"
            )
        return out

    def describe(self) -> list[str]:
        lo_i, lo_s = self.a_lower
        up_i, up_s = self.a_upper
        return [
            f"{lo_i:.6g} + ({lo_s:.6g})*b < a < {up_i:.6g} + ({up_s:.6g})*b",
            f"0 < b < {self.b_max:.6g}",
            f"(dim={self.dim}, mode={self.mode}, V={self.v}"
            + (f", V_max={self.v_max}" if self.v_max is not None else "")
            + f", rhs={self.rhs:.6g})",
        ]

    def to_record(self, recommended: tuple[float, float] | None = None) -> dict:
        rec = {
            "b_max": self.b_max,
            "a_lower_intercept": self.a_lower[0],
            "a_lower_slope": self.a_lower[1],
            "a_upper_slope": self.a_upper[1],
        }
        if recommended is not None:
            rec["recommended_a"] = recommended[0]
            rec["recommended_b"] = recommended[1]
        return rec


def null_escape_rhs(n: int, r2: float) -> float:
    """-n R^2 / (2 (1 - R^2)): what the selected block must beat."""
    return -n * r2 / (2.0 * (1.0 - r2))


def sparsity_side_length(pi: float, p: int, dim: int) -> int:
    """Side length V = floor((pi * p)^(1/dim)) of the target selected block."""
    target = pi * p
    if target < 1.0:
        raise ValidationError(
            f"too sparse: pi * p = {target:.4g} < 1, no voxel-sized block exists"
        )
    return int(math.floor(target ** (1.0 / dim) + SLACK))


def max_simple_r2(dataset) -> float:
    """Maximum R^2 over all simple regressions of Y on a single column.

    Equals the largest squared sample correlation between Y and a
    predictor column.  Constant columns are skipped with a warning; a
    constant response is an error.
    """
    y = np.asarray(dataset.y, dtype=np.float64)
    x = np.asarray(dataset.X, dtype=np.float64)
    yc = y - y.mean()
    sy = float(yc @ yc)
    if sy <= 0.0:
        raise ValidationError("degenerate response: Y has zero variance")
    xc = x - x.mean(axis=0)
    sx = np.einsum("ij,ij->j", xc, xc)
    dead = sx <= 0.0
    if dead.all():
        raise ValidationError("all predictor columns are constant")
    if dead.any():
        warnings.warn(
            f"skipping {int(dead.sum())} constant predictor column(s)",
            stacklevel=2,
        )
    cross = yc @ xc
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(dead, -np.inf, cross**2 / (sx * sy))
    return float(min(1.0, r2.max()))


def _region(dim, mode, v, v_max, rhs, a_lower, a_upper) -> HyperRegion:
    denom = a_upper[1] - a_lower[1]
    if denom == 0.0:
        b_max = math.inf
    else:
        b_max = (a_lower[0] - a_upper[0]) / denom
    if not (b_max > 0.0):
        raise NoFeasibleRegionError(
            "no feasible region: the affine boundaries "
            f"a > {a_lower[0]:.6g} + ({a_lower[1]:.6g})b and "
            f"a < {a_upper[0]:.6g} + ({a_upper[1]:.6g})b "
            f"cross at b = {b_max:.6g} <= 0"
        )
    return HyperRegion(
        dim=dim, mode=mode, v=v, v_max=v_max, rhs=rhs,
        b_max=b_max, a_lower=a_lower, a_upper=a_upper,
    )


def bounds_2d(inp: BoundsInput) -> HyperRegion:
    """Feasible (a, b) on a 2D lattice.

    Decay requires a + 8b < 0; escaping the null model requires the
    quadratic form on the V x V square to exceed rhs, i.e.
    a > (rhs - 2 b P(V)) / V^2 with P the square pair count.
    """
    if inp.dim != 2:
        raise ValidationError(f"bounds_2d needs dim=2, got {inp.dim}")
    v = sparsity_side_length(inp.pi, inp.p, 2)
    rhs = null_escape_rhs(inp.n, inp.r2)
    vsq = v * v
    a_lower = (rhs / vsq, -2.0 * pair_count_square(v) / vsq)
    a_upper = (0.0, -8.0)
    return _region(2, inp.mode, v, None, rhs, a_lower, a_upper)


def bounds_3d(inp: BoundsInput) -> HyperRegion:
    """Feasible (a, b) on a 3D lattice (tight variant).

    Decay: the quadratic form on the largest possible cube,
    V_max = floor(p^(1/3)), must be negative, giving
    a < -(2 P(V_max) / V_max^3) b.  Null-model escape as in 2D but with
    the cube pair count at the target V.
    """
    if inp.dim != 3:
        raise ValidationError(f"bounds_3d needs dim=3, got {inp.dim}")
    v = sparsity_side_length(inp.pi, inp.p, 3)
    v_max = int(math.floor(inp.p ** (1.0 / 3.0) + SLACK))
    rhs = null_escape_rhs(inp.n, inp.r2)
    vcu = v**3
    a_lower = (rhs / vcu, -2.0 * pair_count_cube(v) / vcu)
    a_upper = (0.0, -2.0 * pair_count_cube(v_max) / v_max**3)
    return _region(3, inp.mode, v, v_max, rhs, a_lower, a_upper)


def bounds_3d_relaxed(inp: BoundsInput) -> HyperRegion:
    """Relaxed 3D bounds.

    The cube approximation overstates pair counts for larger V, so the
    lower bound is replaced by the requirement that a single predictor
    is more likely selected than not relative to the null model:
    a >= rhs.  The decay upper bound from V_max is kept.
    """
    if inp.dim != 3:
        raise ValidationError(f"bounds_3d_relaxed needs dim=3, got {inp.dim}")
    v = sparsity_side_length(inp.pi, inp.p, 3)
    v_max = int(math.floor(inp.p ** (1.0 / 3.0) + SLACK))
    rhs = null_escape_rhs(inp.n, inp.r2)
    a_lower = (rhs, 0.0)
    a_upper = (0.0, -2.0 * pair_count_cube(v_max) / v_max**3)
    return _region(3, MODE_RELAXED, v, v_max, rhs, a_lower, a_upper)


def compute_bounds(inp: BoundsInput) -> HyperRegion:
    """Dispatch on dimension and mode."""
    if inp.dim == 2:
        return bounds_2d(inp)
    if inp.mode == MODE_RELAXED:
        return bounds_3d_relaxed(inp)
    return bounds_3d(inp)


def recommend_ab(region: HyperRegion, margin: float = 0.1) -> tuple[float, float]:
    """Pick one (a, b) inside the region.

    Policy: take the largest b (most spatial clustering), backed off by
    `margin` from b_max, then place a a fraction `margin` above the
    lower boundary at that b.  margin = 0 returns the corner point on
    the boundary itself and warns.
    """
    if not 0.0 <= margin < 0.5:
        raise ValidationError(f"margin must be in [0, 0.5), got {margin}")
    if not math.isfinite(region.b_max) or region.b_max <= 0.0:
        raise NoFeasibleRegionError(
            f"cannot recommend from a region with b_max = {region.b_max}"
        )
    b = (1.0 - margin) * region.b_max
    lo = region.a_lower_at(b)
    hi = region.a_upper_at(b)
    a = lo + margin * (hi - lo)
    if margin == 0.0:
        warnings.warn(
            "margin=0 returns a point on the region boundary", stacklevel=2
        )
    return a, b


def check_pair(region: HyperRegion, a: float, b: float) -> None:
    """Raise with the violated inequalities if (a, b) is outside the region."""
    violated = region.violated_inequalities(a, b)
    if violated:
        raise ValidationError(
            "hyperparameters outside the phase-transition bounds:\n  "
            + "\n  ".join(violated)
        )
