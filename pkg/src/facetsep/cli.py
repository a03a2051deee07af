"""Command-line front end.

Subcommands: gen | denoise | separate | score | eval | bench.  Every run
writes a ``manifest.json`` next to its outputs with the resolved parameters,
enough to replay the run exactly.  Exit codes: 0 success, 2 usage or input
error, 3 algorithmic failure (the failing step is printed on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baseline import score_columns
from .datamodel import (
    FcaParams,
    PointCloud,
    read_config,
    read_matrix_csv,
    write_matrix_csv,
)
from .denoise import DenoiseSpec, distance_field, knn_smooth, tv_denoise_cloud
from .errors import AlgorithmError, FacetsepError, InputError
from .fca import Group, run_fca
from .metrics import match_columns, realized_snr
from .synth import SourceSpec, add_awgn, gen_mixing, gen_sources
from . import bench as _bench

SEED_ENV_VAR = "FACETSEP_SEED"


@dataclass
class RunManifest:
    """Resolved record of one CLI run, written as manifest.json."""

    subcommand: str
    params: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    seed: int | None = None
    duration_s: float = 0.0
    outcome: str = "ok"


def _write_manifest(out_dir, manifest: RunManifest):
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def _merge_config(args, mapping):
    """Fill unset argparse values from a key=value config file."""
    if getattr(args, "config", None) is None:
        return
    cfg = read_config(args.config)
    for key, attr in mapping.items():
        if key in cfg and getattr(args, attr, None) is None:
            setattr(args, attr, cfg[key])


_FCA_CONFIG = {"rho": "rho", "eps": "eps", "sigma": "sigma", "delta": "delta", "seed": "seed"}
_DN_CONFIG = {"lambda": "lam", "tau": "tau", "grid": "grid", "knn": "knn", "seed": "seed"}


def _fca_params(args) -> FcaParams:
    return FcaParams(
        rho=args.rho if args.rho is not None else 1e-3,
        eps=args.eps if args.eps is not None else 1e-5,
        sigma=args.sigma if args.sigma is not None else 1e-5,
        delta=args.delta if args.delta is not None else 0.99,
    )


def _denoise_spec(args) -> DenoiseSpec | None:
    method = getattr(args, "denoise", None) or getattr(args, "method", None) or "none"
    if method == "none":
        return None
    kwargs = {"method": method}
    if getattr(args, "knn", None) is not None:
        kwargs["knn"] = args.knn
    if getattr(args, "gauss_width", None) is not None:
        kwargs["gauss_width"] = args.gauss_width
    if getattr(args, "lam", None) is not None:
        kwargs["lam"] = args.lam
    if getattr(args, "tau", None) is not None:
        kwargs["tau"] = args.tau
    if getattr(args, "grid", None) is not None:
        kwargs["grid_n"] = args.grid
    if getattr(args, "tv_iters", None) is not None:
        kwargs["max_iters"] = args.tv_iters
    if getattr(args, "anisotropic", False):
        kwargs["anisotropic"] = True
    return DenoiseSpec(**kwargs)


def cmd_gen(args) -> int:
    _merge_config(args, _FCA_CONFIG)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    spec = SourceSpec(
        n_sources=args.sources,
        n_samples=args.samples,
        mode=args.mode,
        peak_count=args.peaks,
        seed=seed,
    )
    S = gen_sources(spec)
    A = gen_mixing(args.sources, seed=seed + 1)
    X = A @ S
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for name, M in (("S.csv", S), ("A.csv", A), ("X.csv", X)):
        path = os.path.join(args.out_dir, name)
        write_matrix_csv(M, path)
        outputs.append(name)
    if args.snr_db is not None:
        write_matrix_csv(add_awgn(X, args.snr_db, seed=seed + 2), os.path.join(args.out_dir, "X_noisy.csv"))
        outputs.append("X_noisy.csv")
    manifest = RunManifest(
        subcommand="gen",
        params={
            "sources": args.sources,
            "samples": args.samples,
            "mode": args.mode,
            "peaks": args.peaks,
            "snr_db": args.snr_db,
        },
        outputs=outputs,
        seed=seed,
        duration_s=time.perf_counter() - t0,
    )
    _write_manifest(args.out_dir, manifest)
    return 0


def cmd_separate(args) -> int:
    _merge_config(args, {**_FCA_CONFIG, **_DN_CONFIG})
    t0 = time.perf_counter()
    X = read_matrix_csv(args.input, header=args.header)
    params = _fca_params(args)
    dspec = _denoise_spec(args)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = RunManifest(
        subcommand="separate",
        params={
            "rho": params.rho,
            "eps": params.eps,
            "sigma": params.sigma,
            "delta": params.delta,
            "denoise": args.denoise,
        },
        inputs=[args.input],
    )
    try:
        result = run_fca(X, params, denoise=dspec)
    except AlgorithmError as e:
        manifest.outcome = f"error at {e.step}: {e}"
        manifest.duration_s = time.perf_counter() - t0
        _write_manifest(args.out_dir, manifest)
        raise
    write_matrix_csv(result.A_hat, os.path.join(args.out_dir, "A_hat.csv"))
    write_matrix_csv(result.S_hat, os.path.join(args.out_dir, "S_hat.csv"))
    manifest.outputs = ["A_hat.csv", "S_hat.csv"]
    manifest.params["selected_plane_count"] = result.selected_plane_count
    manifest.params["residual"] = result.residual
    manifest.duration_s = time.perf_counter() - t0
    _write_manifest(args.out_dir, manifest)
    return 0


def cmd_denoise(args) -> int:
    _merge_config(args, _DN_CONFIG)
    t0 = time.perf_counter()
    pts = read_matrix_csv(args.input, header=args.header)
    cloud = PointCloud(points=pts, source_index=np.arange(pts.shape[0]))
    spec = _denoise_spec(args)
    if spec is None:
        raise InputError("denoise requires --method box, gauss, or tv")
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    if spec.method == "tv":
        cleaned = tv_denoise_cloud(cloud, spec)
        if args.field_dump:
            chart = cloud.points[:, :2]
            extent = float((chart.max(axis=0) - chart.min(axis=0)).max())
            d = distance_field(chart, spec.grid_n, 0.05 * max(extent, 1e-12))
            write_matrix_csv(d.values, os.path.join(args.out_dir, args.field_dump))
            outputs.append(args.field_dump)
    else:
        whole = Group(facet_id=0, member_ids=list(range(len(cloud))))
        cleaned = knn_smooth(whole, cloud, spec)
    out_name = args.output or "denoised.csv"
    write_matrix_csv(cleaned.points, os.path.join(args.out_dir, out_name))
    outputs.insert(0, out_name)
    manifest = RunManifest(
        subcommand="denoise",
        params={
            "method": spec.method,
            "knn": spec.knn,
            "lambda": spec.lam,
            "tau": spec.tau,
            "grid": spec.grid_n,
        },
        inputs=[args.input],
        outputs=outputs,
        duration_s=time.perf_counter() - t0,
    )
    _write_manifest(args.out_dir, manifest)
    return 0


def cmd_score(args) -> int:
    t0 = time.perf_counter()
    X = read_matrix_csv(args.input, header=args.header)
    scores = score_columns(X)
    os.makedirs(args.out_dir, exist_ok=True)
    out_name = args.output or "scores.csv"
    with open(os.path.join(args.out_dir, out_name), "w", encoding="utf-8") as fh:
        for s in scores:
            fh.write(f"{s.column_id},{s.score:.17g}\n")
    manifest = RunManifest(
        subcommand="score",
        params={},
        inputs=[args.input],
        outputs=[out_name],
        duration_s=time.perf_counter() - t0,
    )
    _write_manifest(args.out_dir, manifest)
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    A = read_matrix_csv(args.a, header=args.header)
    A_hat = read_matrix_csv(args.a_hat, header=args.header)
    report = match_columns(A, A_hat)
    record = {
        "comon": None if math.isinf(report.comon_index) else report.comon_index,
        "perm": list(report.matched_permutation),
        "per_column_error": list(report.per_column_error),
        "snr_db": None,
    }
    inputs = [args.a, args.a_hat]
    if args.x_clean and args.x_noisy:
        snr = realized_snr(
            read_matrix_csv(args.x_clean, header=args.header),
            read_matrix_csv(args.x_noisy, header=args.header),
        )
        record["snr_db"] = None if math.isinf(snr) else snr
        inputs += [args.x_clean, args.x_noisy]
    line = json.dumps(record, sort_keys=True)
    print(line)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    if args.output:
        with open(os.path.join(args.out_dir, args.output), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        outputs.append(args.output)
    manifest = RunManifest(
        subcommand="eval",
        params={},
        inputs=inputs,
        outputs=outputs,
        duration_s=time.perf_counter() - t0,
    )
    _write_manifest(args.out_dir, manifest)
    return 0


def cmd_bench(args) -> int:
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    records, summaries = _bench.run_experiment(
        args.experiment, trials=args.trials, seed=seed, workers=args.workers
    )
    os.makedirs(args.out_dir, exist_ok=True)
    out_name = "results.jsonl"
    with open(os.path.join(args.out_dir, out_name), "w", encoding="utf-8") as fh:
        for rec in records + summaries:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    manifest = RunManifest(
        subcommand="bench",
        params={"experiment": args.experiment, "trials": args.trials, "workers": args.workers},
        outputs=[out_name],
        seed=seed,
        duration_s=time.perf_counter() - t0,
    )
    _write_manifest(args.out_dir, manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facetsep",
        description="Blind separation of nonnegative mixtures by facet identification",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
        p.add_argument("--header", action="store_true", help="skip one header line in input CSVs")
        p.add_argument("--config", help="flat key=value config file")

    g = sub.add_parser("gen", help="generate synthetic sources, mixing, and mixtures")
    g.add_argument("--sources", type=int, required=True)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--mode", choices=["nna", "facet"], required=True)
    g.add_argument("--peaks", type=int, default=3, help="Lorentzian peaks per source")
    g.add_argument("--snr-db", type=float, default=None, help="also write a noisy mixture")
    g.add_argument("--seed", type=int, default=None)
    add_common(g)

    s = sub.add_parser("separate", help="run the separation pipeline on a mixture CSV")
    s.add_argument("--in", dest="input", required=True, help="mixture CSV (rows = observations)")
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--sigma", type=float, default=None)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--denoise", choices=["none", "box", "gauss", "tv"], default="none")
    s.add_argument("--knn", type=int, default=None)
    s.add_argument("--gauss-width", dest="gauss_width", type=float, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--grid", type=int, default=None)
    s.add_argument("--tv-iters", dest="tv_iters", type=int, default=None)
    s.add_argument("--anisotropic", action="store_true")
    s.add_argument("--seed", type=int, default=None)
    add_common(s)

    d = sub.add_parser("denoise", help="denoise a point-cloud CSV (rows = points)")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out", dest="output", default=None, help="output cloud CSV name")
    d.add_argument("--method", choices=["box", "gauss", "tv"], required=True)
    d.add_argument("--knn", type=int, default=None)
    d.add_argument("--gauss-width", dest="gauss_width", type=float, default=None)
    d.add_argument("--lambda", dest="lam", type=float, default=None)
    d.add_argument("--tau", type=float, default=None)
    d.add_argument("--grid", type=int, default=None)
    d.add_argument("--tv-iters", dest="tv_iters", type=int, default=None)
    d.add_argument("--anisotropic", action="store_true")
    d.add_argument("--field-dump", dest="field_dump", default=None,
                   help="also write the distance field grid as CSV")
    d.add_argument("--seed", type=int, default=None)
    add_common(d)

    c = sub.add_parser("score", help="per-column vertex scores as CSV (column_id,score)")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", dest="output", default=None)
    add_common(c)

    e = sub.add_parser("eval", help="compare a recovered mixing matrix against the truth")
    e.add_argument("--a", required=True, help="true mixing matrix CSV")
    e.add_argument("--a-hat", dest="a_hat", required=True, help="recovered mixing matrix CSV")
    e.add_argument("--x-clean", dest="x_clean", default=None)
    e.add_argument("--x-noisy", dest="x_noisy", default=None)
    e.add_argument("--out", dest="output", default=None, help="append the JSON line to this file")
    add_common(e)

    b = sub.add_parser("bench", help="run a benchmark experiment")
    b.add_argument("--experiment", choices=list(_bench.EXPERIMENTS), required=True)
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--seed", type=int, default=None)
    add_common(b)

    return parser


_HANDLERS = {
    "gen": cmd_gen,
    "separate": cmd_separate,
    "denoise": cmd_denoise,
    "score": cmd_score,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.subcommand](args)
    except AlgorithmError as e:
        step = f" at {e.step}" if e.step else ""
        print(f"facetsep {args.subcommand}: failed{step}: {e}", file=sys.stderr)
        return 3
    except InputError as e:
        print(f"facetsep {args.subcommand}: {e}", file=sys.stderr)
        return 2
    except FacetsepError as e:
        print(f"facetsep {args.subcommand}: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"facetsep {args.subcommand}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
