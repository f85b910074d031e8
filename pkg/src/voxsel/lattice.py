"""Voxel lattices: neighbor enumeration and closed-form pair counts.

Voxels sit on a 2D or 3D integer lattice and two voxels are neighbors
when their Chebyshev distance is exactly 1, giving the 8-neighborhood
in 2D and the 26-neighborhood in 3D.  The closed-form expressions for
the number of neighboring pairs inside a full square/cube, and for the
quadratic form ``a * |gamma| + 2b * (#selected pairs)`` evaluated on a
fully selected square/cube, are the analytic backbone of the
hyperparameter bound computations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Enumerating only lexicographically-positive offsets yields each
# unordered neighbor pair exactly once.
_HALF_OFFSETS_2D = [(0, 1), (1, -1), (1, 0), (1, 1)]
_HALF_OFFSETS_3D = [
    (0, 0, 1),
    (0, 1, -1), (0, 1, 0), (0, 1, 1),
    (1, -1, -1), (1, -1, 0), (1, -1, 1),
    (1, 0, -1), (1, 0, 0), (1, 0, 1),
    (1, 1, -1), (1, 1, 0), (1, 1, 1),
]


@dataclass(frozen=True)
class LatticeGraph:
    """A voxel lattice with its Chebyshev-1 neighbor structure.

    Attributes
    ----------
    dim : int
        Lattice dimension, 2 or 3.
    extents : tuple of int or None
        Per-axis sizes for a full box; None for an irregular mask.
    coords : ndarray, shape (p, dim)
        1-based lattice coordinates, row j for predictor j (0-based
        internally, matching design-matrix column order).
    edges : ndarray, shape (m, 2)
        Unordered neighbor pairs as 0-based voxel indices, j1 < j2,
        each pair stored once.
    indptr, indices : ndarray
        CSR adjacency for O(degree) neighbor scans during sampling.

    All arrays are frozen read-only, so a graph can be shared across
    concurrently running chains.
    """

    dim: int
    extents: tuple[int, ...] | None
    coords: np.ndarray
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def degree(self, j: int) -> int:
        return int(self.indptr[j + 1] - self.indptr[j])

    def neighbors(self, j: int) -> np.ndarray:
        return self.indices[self.indptr[j]:self.indptr[j + 1]]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _adjacency_from_edges(p: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    deg = np.zeros(p, dtype=np.int64)
    if edges.size:
        np.add.at(deg, edges[:, 0], 1)
        np.add.at(deg, edges[:, 1], 1)
    indptr = np.zeros(p + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    cursor = indptr[:-1].copy()
    for j1, j2 in edges:
        indices[cursor[j1]] = j2
        cursor[j1] += 1
        indices[cursor[j2]] = j1
        cursor[j2] += 1
    return indptr, indices


def build_lattice(
    extents: tuple[int, ...] | None = None,
    dim: int | None = None,
    coords: np.ndarray | None = None,
) -> LatticeGraph:
    """Build the neighbor graph of a full box or an irregular voxel mask.

    Parameters
    ----------
    extents : tuple of int, optional
        Per-axis sizes of a full box; the voxel for predictor j is
        enumerated in row-major order (last axis fastest).
    dim : int, optional
        2 or 3; inferred from `extents`/`coords` when omitted.
    coords : array-like, shape (p, dim), optional
        Explicit 1-based coordinates for an irregular mask (e.g. an ROI
        that is not a full box).  Mutually exclusive with `extents`.

    Returns
    -------
    LatticeGraph

    Raises
    ------
    ValidationError
        On zero extents, invalid dimension, or duplicate coordinates.
    """
    if (extents is None) == (coords is None):
        raise ValidationError("provide exactly one of extents or coords")

    if extents is not None:
        extents = tuple(int(e) for e in extents)
        if dim is None:
            dim = len(extents)
        if dim not in (2, 3) or len(extents) != dim:
            raise ValidationError(
                f"invalid dimension: dim={dim} with extents {extents}"
            )
        if any(e < 1 for e in extents):
            raise ValidationError(f"invalid dimension: zero extent in {extents}")
        axes = [np.arange(1, e + 1, dtype=np.int64) for e in extents]
        grids = np.meshgrid(*axes, indexing="ij")
        coord_arr = np.stack([g.ravel(order="C") for g in grids], axis=1)
        edges = _box_edges(extents)
        indptr, indices = _adjacency_from_edges(coord_arr.shape[0], edges)
        return LatticeGraph(
            dim=dim,
            extents=extents,
            coords=_freeze(coord_arr),
            edges=_freeze(edges),
            indptr=_freeze(indptr),
            indices=_freeze(indices),
        )

    coord_arr = np.asarray(coords, dtype=np.int64)
    if coord_arr.ndim != 2 or coord_arr.shape[1] not in (2, 3):
        raise ValidationError("coords must have shape (p, 2) or (p, 3)")
    if dim is None:
        dim = coord_arr.shape[1]
    if dim != coord_arr.shape[1]:
        raise ValidationError(
            f"invalid dimension: dim={dim} but coords have {coord_arr.shape[1]} axes"
        )
    if np.any(coord_arr < 1):
        raise ValidationError("coordinates must be >= 1")
    edges = _mask_edges(coord_arr)
    indptr, indices = _adjacency_from_edges(coord_arr.shape[0], edges)
    return LatticeGraph(
        dim=dim,
        extents=None,
        coords=_freeze(coord_arr),
        edges=_freeze(edges),
        indptr=_freeze(indptr),
        indices=_freeze(indices),
    )


def _box_edges(extents: tuple[int, ...]) -> np.ndarray:
    dim = len(extents)
    offsets = _HALF_OFFSETS_2D if dim == 2 else _HALF_OFFSETS_3D
    shape = extents
    idx = np.arange(int(np.prod(extents)), dtype=np.int64).reshape(shape)
    pairs = []
    for off in offsets:
        src = [slice(None)] * dim
        dst = [slice(None)] * dim
        for ax, o in enumerate(off):
            if o == 1:
                src[ax] = slice(0, shape[ax] - 1)
                dst[ax] = slice(1, shape[ax])
            elif o == -1:
                src[ax] = slice(1, shape[ax])
                dst[ax] = slice(0, shape[ax] - 1)
        a = idx[tuple(src)].ravel()
        b = idx[tuple(dst)].ravel()
        if a.size:
            pairs.append(np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    all_pairs = np.concatenate(pairs, axis=0)
    order = np.lexsort((all_pairs[:, 1], all_pairs[:, 0]))
    return np.ascontiguousarray(all_pairs[order])


def _mask_edges(coords: np.ndarray) -> np.ndarray:
    dim = coords.shape[1]
    lookup: dict[tuple[int, ...], int] = {}
    for j, c in enumerate(map(tuple, coords.tolist())):
        if c in lookup:
            raise ValidationError(f"duplicate coordinate {c} at voxels {lookup[c]} and {j}")
        lookup[c] = j
    offsets = _HALF_OFFSETS_2D if dim == 2 else _HALF_OFFSETS_3D
    pairs = []
    for j, c in enumerate(coords.tolist()):
        for off in offsets:
            other = lookup.get(tuple(ci + oi for ci, oi in zip(c, off)))
            if other is not None:
                pairs.append((min(j, other), max(j, other)))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def pair_count_square(v: int) -> int:
    """Number of neighboring pairs among the V*V voxels of a full square.

    Equals 4V^2 - 6V + 2 (exact, integer); V=1 gives 0.
    """
    v = int(v)
    if v < 1:
        raise ValidationError(f"invalid argument: square side must be >= 1, got {v}")
    return 4 * v * v - 6 * v + 2


def pair_count_cube(v: int) -> int:
    """Number of neighboring pairs among the V^3 voxels of a full cube.

    Equals 13(V-2)^3 + 51(V-2)^2 + 66(V-2) + 28; the polynomial also
    evaluates to 0 at the degenerate V=1.
    """
    v = int(v)
    if v < 1:
        raise ValidationError(f"invalid argument: cube side must be >= 1, got {v}")
    w = v - 2
    return 13 * w**3 + 51 * w**2 + 66 * w + 28


def ising_quadratic_square(v: int, a: float, b: float):
    """a'gamma + gamma'B gamma for a fully selected V x V square.

    Returns (a + 8b)V^2 - 12bV + 4b, which equals
    a*V^2 + 2b*pair_count_square(V).  Exact when a, b are integers.
    """
    v = int(v)
    if v < 1:
        raise ValidationError(f"invalid argument: square side must be >= 1, got {v}")
    return (a + 8 * b) * v * v - 12 * b * v + 4 * b


def ising_quadratic_cube(v: int, a: float, b: float):
    """a'gamma + gamma'B gamma for a fully selected V x V x V cube.

    Returns (a+26b)(V-2)^3 + 6(a+17b)(V-2)^2 + 12(a+11b)(V-2) + 8a + 56b,
    which equals a*V^3 + 2b*pair_count_cube(V).  The expression also
    collapses correctly at the degenerate V=1 (single voxel, value a).
    """
    v = int(v)
    if v < 1:
        raise ValidationError(f"invalid argument: cube side must be >= 1, got {v}")
    w = v - 2
    return (
        (a + 26 * b) * w**3
        + 6 * (a + 17 * b) * w**2
        + 12 * (a + 11 * b) * w
        + 8 * a
        + 56 * b
    )


def isolated_graph(p: int) -> LatticeGraph:
    """An edgeless placeholder graph for i.i.d. priors without spatial data.

    Voxels are placed two apart on one row so no pair is Chebyshev-1.
    """
    if p < 1:
        raise ValidationError("isolated_graph requires p >= 1")
    coords = np.stack(
        [np.arange(1, 2 * p, 2, dtype=np.int64), np.ones(p, dtype=np.int64)], axis=1
    )
    return build_lattice(coords=coords, dim=2)


def write_coords(path, graph: LatticeGraph) -> None:
    """Write the coordinate file: header ``j,d1,d2,d3``, 1-based j.

    The d3 column is omitted for 2D graphs.
    """
    cols = ["j", "d1", "d2", "d3"][: 1 + graph.dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for j, row in enumerate(graph.coords, start=1):
            writer.writerow([j, *map(int, row)])


def read_coords(path) -> LatticeGraph:
    """Read a coordinate CSV (``j,d1,d2[,d3]``) and build the graph.

    Rows may appear in any order; j must be the 1-based predictor index
    matching the design-matrix column order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty coordinate file")
        header = [h.strip().lower() for h in header]
        if header[:3] != ["j", "d1", "d2"] or header not in (
            ["j", "d1", "d2"],
            ["j", "d1", "d2", "d3"],
        ):
            raise ValidationError(
                f"{path}: expected header j,d1,d2[,d3], got {header}"
            )
        dim = len(header) - 1
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([int(x) for x in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: bad row {lineno}: {row}") from exc
    if not rows:
        raise ValidationError(f"{path}: no coordinate rows")
    rows.sort(key=lambda r: r[0])
    js = [r[0] for r in rows]
    if js != list(range(1, len(rows) + 1)):
        raise ValidationError(f"{path}: j column must cover 1..p exactly once")
    coords = np.array([r[1:] for r in rows], dtype=np.int64)
    return build_lattice(coords=coords, dim=dim)
