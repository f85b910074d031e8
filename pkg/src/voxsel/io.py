"""File formats and run manifests.

Formats
-------
* response: single-column CSV, no header.
* design: dense CSV (one row per subject, no header) or a flat binary
  of little-endian float64 plus a JSON sidecar recording n, p, layout.
* coordinates: CSV ``j,d1,d2[,d3]`` (see lattice module).
* truth: single-column CSV.
* chain trace directory: ``scalars.csv`` (iteration, r2, model_size,
  n_clusters, sigma2), ``inclusion_counts.csv`` (j, count, sweeps, plus
  an eta_sum column so posterior-mean effects survive a round trip),
  ``segments.csv`` (sparse seg, j, count), ``meta.json``, and optional
  ``states.bin`` with a ``states.json`` layout sidecar.

All CSV numbers are written with shortest-round-trip float formatting,
so reading a file back recovers bit-identical values; every writer
re-reads what it wrote and verifies identity.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .lattice import isolated_graph, read_coords
from .model import Dataset
from .sampler import ChainTrace


def fmt(value) -> str:
    """Shortest decimal string that round-trips a 64-bit float."""
    return repr(float(value))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        writer.writerows(rows)


def sha256_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- vectors and matrices ---------------------------------------------------

def write_vector_csv(path, values) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    with open(path, "w") as fh:
        fh.write("\n".join(fmt(v) for v in values))
        fh.write("\n")
    check = load_vector_csv(path)
    if not np.array_equal(check, values):
        raise ValidationError(f"{path}: round-trip verification failed")


def load_vector_csv(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, dtype=np.float64, delimiter=",", ndmin=1)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if arr.ndim != 1:
        raise ValidationError(f"{path}: expected a single column, got shape {arr.shape}")
    return arr


def write_matrix_csv(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(fmt(v) for v in row))
            fh.write("\n")
    check = load_matrix_csv(path)
    if not np.array_equal(check, matrix):
        raise ValidationError(f"{path}: round-trip verification failed")


def load_matrix_csv(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, dtype=np.float64, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return arr


def write_matrix_binary(path, matrix) -> None:
    """Row-major little-endian float64 with a JSON sidecar."""
    path = Path(path)
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    matrix.tofile(path)
    sidecar = {
        "n": int(matrix.shape[0]),
        "p": int(matrix.shape[1]),
        "layout": "row-major",
        "dtype": "<f8",
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))
    if not np.array_equal(load_matrix_binary(path), matrix):
        raise ValidationError(f"{path}: round-trip verification failed")


def load_matrix_binary(path) -> np.ndarray:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise ValidationError(f"missing sidecar {sidecar_path} for binary matrix")
    meta = json.loads(sidecar_path.read_text())
    for key in ("n", "p", "layout", "dtype"):
        if key not in meta:
            raise ValidationError(f"{sidecar_path}: missing key {key!r}")
    if meta["layout"] != "row-major" or meta["dtype"] != "<f8":
        raise ValidationError(f"{sidecar_path}: unsupported layout/dtype")
    arr = np.fromfile(path, dtype="<f8")
    expected = meta["n"] * meta["p"]
    if arr.size != expected:
        raise ValidationError(
            f"{path}: has {arr.size} values, sidecar promises {expected}"
        )
    return arr.reshape(meta["n"], meta["p"])


def load_design(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bin":
        return load_matrix_binary(path)
    return load_matrix_csv(path)


def load_dataset(
    x_path, y_path, coords_path=None, truth_path=None, require_graph: bool = False
) -> Dataset:
    """Assemble and validate a dataset from files.

    Without a coordinate file the voxels are treated as spatially
    unrelated (edgeless graph), which only i.i.d. priors may use;
    `require_graph` turns that situation into an error.
    """
    x = load_design(x_path)
    y = load_vector_csv(y_path)
    if coords_path is not None:
        graph = read_coords(coords_path)
    elif require_graph:
        raise ValidationError(
            "missing coordinate file: spatial (Ising) priors need voxel coordinates"
        )
    else:
        graph = isolated_graph(x.shape[1])
    truth = load_vector_csv(truth_path) if truth_path is not None else None
    return Dataset(y=y, X=x, graph=graph, truth=truth)


# -- chain traces -----------------------------------------------------------

def save_trace(trace: ChainTrace, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    # wall time is volatile and lives in the run manifest, not here, so
    # reruns produce bit-identical artifacts
    meta = {
        "chain_id": trace.chain_id,
        "p": trace.p,
        "iterations": trace.iterations,
        "burn_in": trace.burn_in,
        "kept": trace.kept,
        "n_segments": trace.n_segments,
        "status": trace.status,
        "error": trace.error,
        "seed": trace.seed,
        "has_states": trace.states is not None,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))
    _write_rows(
        directory / "scalars.csv",
        ["iteration", "r2", "model_size", "n_clusters", "sigma2"],
        (
            [
                trace.burn_in + k + 1,
                fmt(trace.r2[k]),
                int(trace.model_size[k]),
                int(trace.n_clusters[k]),
                fmt(trace.sigma2[k]),
            ]
            for k in range(trace.kept)
        ),
    )
    _write_rows(
        directory / "inclusion_counts.csv",
        ["j", "count", "sweeps", "eta_sum"],
        (
            [j + 1, int(trace.inclusion_counts[j]), trace.kept, fmt(trace.eta_sum[j])]
            for j in range(trace.p)
        ),
    )
    seg_rows = []
    segs, js = np.nonzero(trace.segment_counts)
    for s, j in zip(segs, js):
        seg_rows.append([int(s), int(j) + 1, int(trace.segment_counts[s, j])])
    _write_rows(directory / "segments.csv", ["seg", "j", "count"], seg_rows)
    if trace.states is not None:
        _save_states(trace.states, directory)
    reread = load_trace(directory)
    same = (
        np.array_equal(reread.inclusion_counts, trace.inclusion_counts)
        and np.array_equal(reread.eta_sum, trace.eta_sum)
        and np.array_equal(reread.r2, trace.r2)
        and np.array_equal(reread.sigma2, trace.sigma2)
        and np.array_equal(reread.segment_counts, trace.segment_counts)
    )
    if not same:
        raise ValidationError(f"{directory}: trace round-trip verification failed")


def _save_states(states: dict, directory: Path) -> None:
    order = ["gamma", "z", "theta", "w", "sigma2"]
    dtypes = {"gamma": "<u1", "z": "<i8", "theta": "<f8", "w": "<f8", "sigma2": "<f8"}
    layout = []
    offset = 0
    with open(directory / "states.bin", "wb") as fh:
        for name in order:
            arr = np.ascontiguousarray(states[name].astype(dtypes[name]))
            raw = arr.tobytes()
            fh.write(raw)
            layout.append(
                {
                    "name": name,
                    "dtype": dtypes[name],
                    "shape": list(arr.shape),
                    "offset": offset,
                }
            )
            offset += len(raw)
    (directory / "states.json").write_text(json.dumps(layout, indent=1))


def _load_states(directory: Path) -> dict:
    layout = json.loads((directory / "states.json").read_text())
    raw = (directory / "states.bin").read_bytes()
    states = {}
    for entry in layout:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 0
        arr = np.frombuffer(
            raw, dtype=entry["dtype"], count=count, offset=entry["offset"]
        )
        states[entry["name"]] = arr.reshape(shape).copy()
    return states


def load_trace(directory) -> ChainTrace:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    p, kept = meta["p"], meta["kept"]
    r2 = np.zeros(kept)
    model_size = np.zeros(kept, dtype=np.int32)
    n_clusters = np.zeros(kept, dtype=np.int32)
    sigma2 = np.zeros(kept)
    with open(directory / "scalars.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["iteration", "r2", "model_size", "n_clusters", "sigma2"]:
            raise ValidationError(f"{directory}/scalars.csv: unexpected header {header}")
        for k, row in enumerate(reader):
            r2[k] = float(row[1])
            model_size[k] = int(row[2])
            n_clusters[k] = int(row[3])
            sigma2[k] = float(row[4])
    counts = np.zeros(p, dtype=np.int64)
    eta_sum = np.zeros(p)
    with open(directory / "inclusion_counts.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["j", "count", "sweeps", "eta_sum"]:
            raise ValidationError(
                f"{directory}/inclusion_counts.csv: unexpected header {header}"
            )
        for row in reader:
            j = int(row[0]) - 1
            counts[j] = int(row[1])
            eta_sum[j] = float(row[3])
    seg_counts = np.zeros((meta["n_segments"], p), dtype=np.int64)
    seg_path = directory / "segments.csv"
    if seg_path.exists():
        with open(seg_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                seg_counts[int(row[0]), int(row[1]) - 1] = int(row[2])
    states = _load_states(directory) if meta.get("has_states") else None
    return ChainTrace(
        chain_id=meta["chain_id"],
        p=p,
        iterations=meta["iterations"],
        burn_in=meta["burn_in"],
        kept=kept,
        inclusion_counts=counts,
        eta_sum=eta_sum,
        r2=r2,
        model_size=model_size,
        n_clusters=n_clusters,
        sigma2=sigma2,
        segment_counts=seg_counts,
        states=states,
        status=meta["status"],
        error=meta["error"],
        elapsed=0.0,
        seed=meta["seed"],
    )


# -- posterior summaries ----------------------------------------------------

def write_summary_csv(path, summary, graph) -> None:
    coords = graph.coords
    _write_rows(
        path,
        ["j", "d1", "d2", "d3", "inclusion_prob", "eta_hat", "rank"],
        (
            [
                j + 1,
                int(coords[j, 0]),
                int(coords[j, 1]),
                int(coords[j, 2]) if graph.dim == 3 else 1,
                fmt(summary.inclusion_prob[j]),
                fmt(summary.eta_hat[j]),
                int(summary.rank[j]),
            ]
            for j in range(summary.p)
        ),
    )


def write_convergence_csv(path, table: dict) -> None:
    _write_rows(
        path,
        ["statistic", "R_hat"],
        ([name, fmt(value)] for name, value in table.items()),
    )


def write_roc_csv(path, points) -> None:
    _write_rows(
        path, ["fpr", "tpr"], ([fmt(a), fmt(b)] for a, b in points)
    )


def write_heatmap_csv(path, grid) -> None:
    with open(path, "w") as fh:
        for row in grid:
            fh.write(",".join("" if np.isnan(v) else str(int(v)) for v in row))
            fh.write("\n")


# -- run manifest -----------------------------------------------------------

@dataclass
class RunManifest:
    """Reproducibility record written before sampling and finalized after.

    Volatile fields (timestamps, wall times) live only here; the
    artifact files themselves are deterministic functions of the config
    and input digests, and their hashes are recorded under outputs.
    """

    config: dict
    dataset_digests: dict
    code_version: str = __version__
    chain_seeds: list = field(default_factory=list)
    status: str = "running"
    started: float = field(default_factory=time.time)
    finished: float | None = None
    timing: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def start_manifest(out_dir, config_snapshot: dict, data_paths: dict) -> RunManifest:
    digests = {
        name: sha256_digest(p) for name, p in data_paths.items() if p is not None
    }
    seed = config_snapshot.get("seed", 0)
    n_chains = config_snapshot.get("n_chains", 1)
    manifest = RunManifest(
        config=config_snapshot,
        dataset_digests=digests,
        chain_seeds=[
            {"chain_id": i, "seed": seed, "spawn_key": [i]} for i in range(n_chains)
        ],
    )
    manifest.save(Path(out_dir) / "manifest.json")
    return manifest


def finalize_manifest(out_dir, manifest: RunManifest, traces=None, status="complete"):
    out_dir = Path(out_dir)
    manifest.status = status
    manifest.finished = time.time()
    if traces:
        manifest.timing = {
            "seconds_total": sum(t.elapsed for t in traces),
            "seconds_per_1000_sweeps": [
                t.seconds_per_1000_sweeps() for t in traces
            ],
        }
    outputs = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            outputs[str(path.relative_to(out_dir))] = sha256_digest(path)
    manifest.outputs = outputs
    manifest.save(out_dir / "manifest.json")
    return manifest
