"""Batch command line: bounds, simulate, fit, diagnose, roc, heatmap,
and the end-to-end pipeline.

Configuration may come from an INI-style file (sections [bounds],
[data], [sampler], [dp], [output]) with command-line flags taking
precedence.  Exit codes: 0 success, 2 validation error, 3 numerical
failure, 4 empty hyperparameter region.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import (
    convergence_table,
    inclusion_probabilities,
    rank_heatmap_slices,
    rank_with_index_ties,
    roc_curve,
)
from .errors import ValidationError, VoxselError
from .hyperbounds import (
    BoundsInput,
    check_pair,
    compute_bounds,
    max_simple_r2,
    recommend_ab,
)
from .lattice import build_lattice, write_coords
from .model import DPConfig, IsingParams, PriorKind
from .sampler import SamplerConfig, run_parallel
from .simgen import ScenarioSpec, generate_null_response, generate_scenario, realized_snr


class Settings:
    """Merged configuration: file values overridden by CLI flags."""

    def __init__(self, config_path=None):
        self.parser = configparser.ConfigParser()
        if config_path:
            read = self.parser.read(config_path)
            if not read:
                raise ValidationError(f"cannot read config file {config_path}")

    def get(self, section, key, flag_value, cast=str, default=None):
        if flag_value is not None:
            return flag_value
        if self.parser.has_option(section, key):
            raw = self.parser.get(section, key)
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default


def _out_dir(value) -> Path:
    out = Path(value if value is not None else os.environ.get("VOXSEL_OUT", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sampler_config(settings, args, b_required_zero: bool) -> SamplerConfig:
    get = settings.get
    prior = PriorKind.parse(get("sampler", "prior", args.prior, str, "ising-dp"))
    a = get("sampler", "a", args.a, float)
    b = get("sampler", "b", args.b, float)
    if a is None:
        raise VoxselError("internal: hyperparameter a unresolved")
    if b is None:
        b = 0.0
    return SamplerConfig(
        ising=IsingParams(a=a, b=0.0 if b_required_zero else b),
        prior=prior,
        dp=DPConfig(
            H=get("dp", "h", args.H, int, 20),
            alpha=get("dp", "alpha", args.alpha, float, 1.0),
            v=get("dp", "v", args.v, float, 10.0),
            alpha_update=get("dp", "alpha_update", args.alpha_update, str, "fixed"),
        ),
        iterations=get("sampler", "iterations", args.iterations, int, 20_000),
        burn_in=get("sampler", "burn_in", args.burn_in, int, 10_000),
        n_chains=get("sampler", "n_chains", args.n_chains, int, 4),
        seed=get("sampler", "seed", args.seed, int, 0),
        thin=get("sampler", "thin", args.thin, int, 10),
        recompute_interval=get(
            "sampler", "recompute_interval", args.recompute_interval, int, 1000
        ),
        store_states=bool(
            get("sampler", "store_states", args.store_states or None, bool, False)
        ),
        workers=get("sampler", "workers", args.workers, int, None),
    )


def _bounds_input(settings, args, n, p, dim, r2) -> BoundsInput:
    get = settings.get
    mode = get("bounds", "r2_mode", args.r2_mode, str, None)
    if mode is None:
        mode = "relaxed" if dim == 3 else "expected-r2"
    return BoundsInput(
        n=n, p=p, dim=dim,
        pi=get("bounds", "pi", args.pi, float, 0.05),
        r2=r2, mode=mode,
    )


def _resolve_r2(settings, args, dataset=None):
    raw = settings.get("bounds", "r2", args.r2, str, "data")
    if isinstance(raw, str) and raw.strip().lower() == "data":
        if dataset is None:
            raise ValidationError(
                "r2 = data needs a dataset; pass --x/--y or a numeric --r2"
            )
        return max_simple_r2(dataset), "data-r2"
    return float(raw), None


# -- subcommands ------------------------------------------------------------

def cmd_bounds(args):
    settings = Settings(args.config)
    get = settings.get
    n = get("bounds", "n", args.n, int)
    p = get("bounds", "p", args.p, int)
    dim = get("bounds", "dim", args.dim, int)
    if None in (n, p, dim):
        raise ValidationError("bounds needs n, p and dim (flags or config)")
    dataset = None
    if args.x and args.y:
        dataset = io.load_dataset(args.x, args.y)
    r2, forced_mode = _resolve_r2(settings, args, dataset)
    inp = _bounds_input(settings, args, n, p, dim, r2)
    if forced_mode and inp.mode != "relaxed":
        inp = BoundsInput(n=n, p=p, dim=dim, pi=inp.pi, r2=r2, mode=forced_mode)
    region = compute_bounds(inp)
    margin = get("bounds", "margin", args.margin, float, 0.1)
    a, b = recommend_ab(region, margin=margin)
    for line in region.describe():
        print(line)
    print(json.dumps(region.to_record(recommended=(a, b))))
    return 0


def cmd_simulate(args):
    out = _out_dir(args.out)
    rng = np.random.default_rng(args.seed)
    if args.null_of:
        src = Path(args.null_of)
        x = io.load_design(_find_design(src))
        y_ref = io.load_vector_csv(src / "y.csv")
        graph = _load_run_coords(src, x.shape[1])
        from .model import Dataset

        ds = Dataset(y=y_ref, X=x, graph=graph)
        y_null = generate_null_response(ds, rng)
        io.write_vector_csv(out / "y.csv", y_null)
        _copy_design(src, out)
        io.write_vector_csv(out / "truth.csv", np.zeros(x.shape[1]))
        manifest = {
            "kind": "simulate-null",
            "source": str(src),
            "seed": args.seed,
            "reference_mean": float(y_ref.mean()),
            "reference_sd": float(y_ref.std()),
        }
    else:
        if args.scenario is None:
            raise ValidationError("simulate needs --scenario or --null-of")
        extents = tuple(int(e) for e in args.extents.split(","))
        spec = ScenarioSpec(
            scenario=args.scenario,
            n=args.n if args.n is not None else 104,
            extents=extents,
            noise_sd=args.noise_sd,
            target_snr=args.target_snr,
        )
        ds = generate_scenario(spec, rng)
        if args.binary_x:
            io.write_matrix_binary(out / "x.bin", ds.X)
        else:
            io.write_matrix_csv(out / "x.csv", ds.X)
        io.write_vector_csv(out / "y.csv", ds.y)
        write_coords(out / "coords.csv", ds.graph)
        io.write_vector_csv(out / "truth.csv", ds.truth)
        manifest = {
            "kind": "simulate",
            "scenario": spec.scenario,
            "n": spec.n,
            "extents": list(spec.extents),
            "rho_x": spec.rho_x,
            "clusters": [
                {"block": [list(ax) for ax in block], "level": level}
                for block, level in spec.clusters
            ],
            "noise_sd": spec.noise_sd,
            "target_snr": spec.target_snr,
            "realized_snr": realized_snr(ds),
            "seed": args.seed,
        }
    manifest["outputs"] = {
        f.name: io.sha256_digest(f)
        for f in sorted(out.iterdir())
        if f.is_file() and f.name != "manifest.json"
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    print(f"wrote dataset to {out}")
    return 0


def _find_design(directory: Path) -> Path:
    for name in ("x.csv", "x.bin"):
        if (directory / name).exists():
            return directory / name
    raise ValidationError(f"no design file (x.csv or x.bin) in {directory}")


def _copy_design(src: Path, out: Path) -> None:
    design = _find_design(src)
    data = design.read_bytes()
    (out / design.name).write_bytes(data)
    if design.suffix == ".bin":
        sidecar = design.with_suffix(".json")
        (out / sidecar.name).write_bytes(sidecar.read_bytes())
    coords = src / "coords.csv"
    if coords.exists():
        (out / "coords.csv").write_bytes(coords.read_bytes())


def _load_run_coords(directory: Path, p: int):
    from .lattice import isolated_graph, read_coords

    coords = directory / "coords.csv"
    if coords.exists():
        return read_coords(coords)
    return isolated_graph(p)


def _guarded_ab(settings, args, dataset, config: SamplerConfig):
    """Refuse (a, b) outside the computed region unless --force."""
    if not config.prior.uses_ising or args.force:
        return
    r2, _mode = _resolve_r2(settings, args, dataset)
    inp = _bounds_input(
        settings, args, dataset.n, dataset.p, dataset.graph.dim, r2
    )
    region = compute_bounds(inp)
    check_pair(region, config.ising.a, config.ising.b)


def cmd_fit(args):
    settings = Settings(args.config)
    get = settings.get
    x_path = get("data", "x", args.x)
    y_path = get("data", "y", args.y)
    coords_path = get("data", "coords", args.coords)
    if x_path is None or y_path is None:
        raise ValidationError("fit needs --x and --y (or [data] in the config)")
    prior = PriorKind.parse(get("sampler", "prior", args.prior, str, "ising-dp"))
    dataset = io.load_dataset(
        x_path, y_path, coords_path, require_graph=prior.uses_ising
    )
    a = get("sampler", "a", args.a, float)
    b = get("sampler", "b", args.b, float)
    derived_both = False
    if prior.uses_ising and (a is None or b is None):
        derived_both = a is None and b is None
        r2, _ = _resolve_r2(settings, args, dataset)
        inp = _bounds_input(settings, args, dataset.n, dataset.p, dataset.graph.dim, r2)
        region = compute_bounds(inp)
        margin = get("bounds", "margin", args.margin, float, 0.1)
        rec_a, rec_b = recommend_ab(region, margin=margin)
        a = a if a is not None else rec_a
        b = b if b is not None else rec_b
        print(f"derived hyperparameters a={a:.6g} b={b:.6g}")
    if a is None:
        raise ValidationError("fit needs --a for i.i.d. priors (Bernoulli log-odds)")
    args.a, args.b = a, b
    config = _sampler_config(settings, args, b_required_zero=not prior.uses_ising)
    if not derived_both:
        # user-supplied values (even partially) must sit inside the bounds
        _guarded_ab(settings, args, dataset, config)
    out = _out_dir(args.out)
    snapshot = {
        "command": "fit",
        "prior": config.prior.value,
        "a": config.ising.a,
        "b": config.ising.b,
        "dp": {"H": config.dp.H, "alpha": config.dp.alpha, "v": config.dp.v,
               "alpha_update": config.dp.alpha_update},
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "n_chains": config.n_chains,
        "seed": config.seed,
        "thin": config.thin,
        "recompute_interval": config.recompute_interval,
        "store_states": config.store_states,
    }
    manifest = io.start_manifest(
        out, snapshot,
        {"x": x_path, "y": y_path, "coords": coords_path},
    )
    if coords_path is not None:
        (out / "coords.csv").write_bytes(Path(coords_path).read_bytes())
    traces = run_parallel(dataset, config)
    for trace in traces:
        io.save_trace(trace, out / f"chain_{trace.chain_id:03d}")
    ok = [t for t in traces if t.status == "ok"]
    io.finalize_manifest(
        out, manifest, traces, status="complete" if ok else "failed"
    )
    for t in traces:
        note = "" if t.status == "ok" else f"  ({t.error})"
        print(
            f"chain {t.chain_id}: {t.status}, kept {t.kept}, "
            f"{t.seconds_per_1000_sweeps():.2f} s/1000 sweeps{note}"
        )
    return 0 if ok else 3


def _load_run(run_dir: Path):
    chains = sorted(run_dir.glob("chain_*"))
    if not chains:
        raise ValidationError(f"no chain_* directories under {run_dir}")
    return [io.load_trace(c) for c in chains]


def cmd_diagnose(args):
    run_dir = Path(args.run)
    out = _out_dir(args.out if args.out else run_dir)
    traces = _load_run(run_dir)
    usable = [t for t in traces if t.kept > 0]
    summary = inclusion_probabilities(usable)
    if args.coords:
        from .lattice import read_coords

        graph = read_coords(args.coords)
    else:
        graph = _load_run_coords(run_dir, summary.p)
    io.write_summary_csv(out / "summary.csv", summary, graph)
    table = convergence_table(usable, top_k=args.top_k)
    io.write_convergence_csv(out / "convergence.csv", table)
    for name, value in table.items():
        print(f"R_hat[{name}] = {value:.4f}")
    print(f"wrote {out / 'summary.csv'} and {out / 'convergence.csv'}")
    return 0


def _read_summary(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {
        "j": rows[:, 0].astype(int),
        "coords": rows[:, 1:4].astype(int),
        "inclusion_prob": rows[:, 4],
        "eta_hat": rows[:, 5],
        "rank": rows[:, 6].astype(int),
    }


def cmd_roc(args):
    summary = _read_summary(args.summary)
    truth = io.load_vector_csv(args.truth)
    points, auc = roc_curve(summary["inclusion_prob"], truth != 0)
    out = Path(args.out) if args.out else Path("roc.csv")
    io.write_roc_csv(out, points)
    print(f"AUC = {auc:.6f}")
    return 0


def cmd_heatmap(args):
    from .diagnostics import PosteriorSummary

    data = _read_summary(args.summary)
    graph = build_lattice(coords=data["coords"], dim=3)
    summary = PosteriorSummary(
        inclusion_prob=data["inclusion_prob"],
        eta_hat=data["eta_hat"],
        rank=rank_with_index_ties(data["inclusion_prob"]),
        n_kept=1,
    )
    slices = [int(s) for s in args.slices.split(",")]
    grids = rank_heatmap_slices(summary, graph, axis=args.axis, slice_indices=slices)
    out = _out_dir(args.out)
    for s, grid in zip(slices, grids):
        path = out / f"heatmap_axis{args.axis}_slice{s}.csv"
        io.write_heatmap_csv(path, grid)
        print(f"wrote {path}")
    return 0


def cmd_pipeline(args):
    from .errors import NoFeasibleRegionError

    stage = "fit"
    try:
        code = cmd_fit(args)
        if code != 0:
            return code
        stage = "diagnose"
        out = Path(args.out)
        args.run = str(out)
        args.coords = args.coords or (
            str(out / "coords.csv") if (out / "coords.csv").exists() else None
        )
        args.top_k = getattr(args, "top_k", 3)
        cmd_diagnose(args)
        if args.truth:
            stage = "roc"
            args.summary = str(out / "summary.csv")
            args.out = str(out / "roc.csv")
            cmd_roc(args)
        return 0
    except NoFeasibleRegionError as exc:
        raise type(exc)(f"[stage bounds] {exc}") from exc
    except VoxselError as exc:
        raise type(exc)(f"[stage {stage}] {exc}") from exc


# -- parser wiring ----------------------------------------------------------

def _add_bounds_flags(p):
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int, dest="p")
    p.add_argument("--dim", type=int, choices=(2, 3))
    p.add_argument("--pi", type=float)
    p.add_argument("--r2", type=str, help="numeric value or 'data'")
    p.add_argument("--r2-mode", dest="r2_mode",
                   choices=("expected-r2", "data-r2", "relaxed"))
    p.add_argument("--margin", type=float)


def _add_sampler_flags(p):
    p.add_argument("--prior", choices=[k.value for k in PriorKind])
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--n-chains", dest="n_chains", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--recompute-interval", dest="recompute_interval", type=int)
    p.add_argument("--store-states", dest="store_states", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--h", dest="H", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--v", type=float)
    p.add_argument("--alpha-update", dest="alpha_update", choices=("fixed", "gibbs"))
    p.add_argument("--force", action="store_true",
                   help="run hyperparameters outside the computed bounds")


def _add_data_flags(p, truth=True):
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--coords")
    if truth:
        p.add_argument("--truth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsel",
        description="Bayesian spatial variable selection for scalar-on-image regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="admissible (a, b) region and a recommendation")
    p.add_argument("--config")
    _add_bounds_flags(p)
    p.add_argument("--x")
    p.add_argument("--y")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--extents", default="10,10,10")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--target-snr", dest="target_snr", type=float)
    p.add_argument("--binary-x", dest="binary_x", action="store_true")
    p.add_argument("--null-of", dest="null_of",
                   help="dataset dir: emit a moment-matched independent response")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    p.add_argument("--config")
    _add_data_flags(p, truth=False)
    p.add_argument("--out", required=True)
    _add_sampler_flags(p)
    _add_bounds_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="posterior summary and convergence table")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.add_argument("--coords")
    p.add_argument("--top-k", dest="top_k", type=int, default=3)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("roc", help="ROC curve of inclusion probabilities vs truth")
    p.add_argument("--summary", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("heatmap", help="rank heatmap slice grids")
    p.add_argument("--summary", required=True)
    p.add_argument("--axis", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--slices", required=True, help="comma-separated slice indices")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("pipeline", help="bounds (if needed) + fit + diagnose [+ roc]")
    p.add_argument("--config")
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    _add_sampler_flags(p)
    _add_bounds_flags(p)
    p.add_argument("--top-k", dest="top_k", type=int, default=3)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VoxselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
