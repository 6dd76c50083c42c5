"""Command-line interface.

Subcommands: ``dist`` (pairwise distance cache), ``sigma-scan`` (minimum
eigenvalue versus bandwidth), ``run`` (full classification experiment),
``predict`` (label images with a saved model), ``export`` (IDX <-> CSV),
``features`` (dump spectral feature vectors). Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .config import ExperimentConfig, load_config
from .container import Container, MatrixKind, pack_eigenpairs, read_container, write_container
from .data import load_csv, load_idx, save_csv, save_idx
from .errors import DataError, NumericalError, UsageError
from .experiment import (
    cached_transport_distances,
    load_model,
    pairwise_cache_key,
    run_experiment,
    save_model,
)
from .kernels import exponential_kernel_matrix
from .measure import build_ground_cost
from .spectral import (
    eigendecompose,
    find_sigma_psd,
    lambda_min_scan,
    reference_bandwidths,
    truncate,
)
from .transport import pairwise_distances


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_cfg(args) -> ExperimentConfig:
    return load_config(getattr(args, "config", None))


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _limited(dataset, limit):
    if limit and limit < len(dataset):
        return dataset.take(np.arange(limit), source=f"{dataset.source}[:{limit}]")
    return dataset


def cmd_dist(args) -> int:
    cfg = _load_cfg(args)
    cfg.validate()
    dataset = _limited(cfg.load_dataset(), args.limit)
    out = _outdir(cfg)
    path = Path(args.out) if args.out else out / "distances.wskn"
    key = pairwise_cache_key(dataset, None, cfg.sinkhorn, cfg.prune)

    if path.exists():
        box = read_container(path)
        stored = box.section(b"HASH")
        if stored is not None and stored.hex() == key:
            print(f"cache hit: {path} already holds this dataset's distances")
            matrix = box.matrix
            if args.verify:
                grid = dataset.grid()
                cost = build_ground_cost(grid, grid)
                measures = dataset.to_measures(grid, prune=cfg.prune)
                fresh = pairwise_distances(measures, measures, cost, cfg.sinkhorn, cfg.jobs).values
                if not np.array_equal(fresh, matrix):
                    raise DataError(f"cache {path} does not match a fresh recomputation")
                print("verify: cache matches recomputation bitwise")
            _dist_reports(args, out, matrix)
            return 0
        raise DataError(
            f"{path} exists but was built from different data or settings "
            f"(stored hash {stored.hex()[:16] if stored else 'missing'}..., expected {key[:16]}...); "
            "delete it or choose another --out to recompute"
        )

    grid = dataset.grid()
    cost = build_ground_cost(grid, grid)
    measures = dataset.to_measures(grid, prune=cfg.prune)
    rep = pairwise_distances(measures, measures, cost, cfg.sinkhorn, jobs=cfg.jobs)
    if not rep.all_converged:
        bad = int((~rep.converged).sum())
        print(f"warning: {bad} pair(s) did not reach the marginal tolerance", file=sys.stderr)
    write_container(
        path,
        Container(
            matrix=rep.values,
            epsilon=cfg.sinkhorn.epsilon,
            sigma=0.0,
            kind=MatrixKind.TRANSPORT_SQ_DISTANCE,
            sections=((b"HASH", bytes.fromhex(key)),),
        ),
    )
    print(f"wrote {len(dataset)}x{len(dataset)} distance matrix to {path}")
    _dist_reports(args, out, rep.values)
    return 0


def _dist_reports(args, out: Path, matrix: np.ndarray) -> None:
    if getattr(args, "heatmap", False):
        report.write_pgm(out / "distances.pgm", matrix)
        report.render_heatmap(out / "distances.png", matrix, title="squared transport distances")
        print(f"wrote {out / 'distances.pgm'} and {out / 'distances.png'}")
    if getattr(args, "csv", False):
        report.write_csv(
            out / "distances.csv",
            [f"d{j}" for j in range(matrix.shape[1])],
            [tuple(row) for row in matrix],
        )
        print(f"wrote {out / 'distances.csv'}")


def cmd_sigma_scan(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    cache = Path(args.cache) if args.cache else out / "distances.wskn"
    if not cache.exists():
        raise DataError(f"distance cache {cache} not found; run the dist subcommand first")
    box = read_container(cache)
    D = box.matrix
    if args.sigmas:
        sigmas = [float(s) for s in args.sigmas.split(",")]
    else:
        lo, hi = reference_bandwidths(D)
        sigmas = np.geomspace(lo, hi, args.points).tolist()
    scan = lambda_min_scan(D, sigmas)
    psd = find_sigma_psd(D, sigma_hi=max(sigmas))
    rows = [(s, l) for s, l in scan]
    report.write_csv(out / "sigma_scan.csv", ["sigma", "lambda_min"], rows)
    report.render_sigma_scan(out / "sigma_scan.png", scan, sigma_psd=psd.sigma)
    print(f"wrote {out / 'sigma_scan.csv'} and {out / 'sigma_scan.png'}")
    if psd.transition_found:
        print(
            f"estimated PSD bandwidth edge: {psd.sigma!r} "
            f"(lambda_min {psd.lambda_min!r}, bracket {psd.bracket[0]!r}..{psd.bracket[1]!r})"
        )
    else:
        print(f"PSD across the whole bracket; largest bandwidth tried: {psd.sigma!r}")
    for s in [float(x) for x in args.heatmap_sigmas.split(",")] if args.heatmap_sigmas else []:
        K = exponential_kernel_matrix(D, s)
        pgm = out / f"kernel_sigma_{s:g}.pgm"
        png = out / f"kernel_sigma_{s:g}.png"
        report.write_pgm(pgm, K)
        report.render_heatmap(png, K, title=f"kernel matrix, sigma={s:g}")
        print(f"wrote {pgm} and {png}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    result, last_model = run_experiment(cfg)
    header = [
        "method",
        "seed",
        "sigma",
        "gamma",
        "k",
        "ell",
        "lambda_min",
        "validation_error_pct",
        "test_error_pct",
    ]
    rows = [
        (
            r.method,
            r.seed,
            r.sigma,
            r.gamma,
            r.k,
            r.ell,
            r.lambda_min,
            r.validation_error_pct,
            r.test_error_pct,
        )
        for r in result.records
    ]
    report.write_csv(out / "results.csv", header, rows)
    report.write_csv(
        out / "timings.csv",
        ["method", "seed", "seconds"],
        [(r.method, r.seed, r.seconds) for r in result.records],
    )
    summary = result.summary_row()
    if summary is not None:
        report.write_csv(
            out / "summary.csv",
            [
                "method",
                "repetitions",
                "mean_test_error_pct",
                "std_test_error_pct",
                "best_test_error_pct",
                "mean_validation_error_pct",
            ],
            [summary],
        )
        report.render_error_bars(
            out / "summary.png", [summary[0]], [summary[2]], [summary[3]]
        )
        print(
            f"{summary[0]}: mean test error {summary[2]:.2f}% "
            f"(std {summary[3]:.2f}%, best {summary[4]:.2f}%) over {summary[1]} repetition(s)"
        )
    if result.failures:
        report.write_csv(
            out / "failures.csv",
            ["seed", "stage", "message"],
            [(f.seed, f.stage, f.message) for f in result.failures],
        )
        print(f"{len(result.failures)} repetition(s) failed; see {out / 'failures.csv'}")
    if result.sweep_rows:
        report.write_csv(
            out / "sweep.csv",
            ["train_size", "mean_test_error_pct", "std_test_error_pct"],
            result.sweep_rows,
        )
        report.render_sweep(out / "sweep.png", result.sweep_rows, cfg.method.value)
        print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.png'}")
    if last_model is not None:
        save_model(out / "model.wskn", last_model)
        print(f"saved last trained model to {out / 'model.wskn'}")
    print(f"wrote {out / 'results.csv'}")
    return 0 if result.records else 3


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.format == "idx":
        if not args.labels:
            raise UsageError("idx input needs --labels (labels are ignored for prediction)")
        images = load_idx(args.images, args.labels)
    else:
        images = load_csv(args.images)
    predicted = model.predict(images, jobs=args.jobs)
    for label in predicted:
        print(int(label))
    return 0


def cmd_export(args) -> int:
    if args.to == "csv":
        if not (args.images and args.labels):
            raise UsageError("exporting to csv needs --images and --labels (IDX input)")
        dataset = load_idx(args.images, args.labels)
        if not args.out:
            raise UsageError("--out is required")
        save_csv(dataset, args.out)
        print(f"wrote {len(dataset)} rows to {args.out}")
    else:
        if not args.path:
            raise UsageError("exporting to idx needs --path (CSV input)")
        dataset = load_csv(args.path)
        if not (args.out_images and args.out_labels):
            raise UsageError("--out-images and --out-labels are required")
        save_idx(dataset, args.out_images, args.out_labels)
        print(f"wrote {len(dataset)} images to {args.out_images}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_cfg(args)
    cfg.validate()
    dataset = _limited(cfg.load_dataset(), args.limit)
    out = _outdir(cfg)
    grid = dataset.grid()
    cost = build_ground_cost(grid, grid)
    D = cached_transport_distances(
        out / "cache", dataset, None, cost, cfg.sinkhorn, cfg.prune, cfg.jobs
    )
    if args.sigma:
        sigma = float(args.sigma)
    else:
        positive = D[D > 0]
        sigma = float(np.sqrt(np.median(positive))) if positive.size else 1.0
    K = exponential_kernel_matrix(D, sigma)
    fm = truncate(eigendecompose(K), args.threshold)
    feats = fm.train_features()
    path = Path(args.out) if args.out else out / "features.csv"
    report.write_csv(
        path,
        ["index"] + [f"phi_{i}" for i in range(fm.ell)],
        [(i, *feats[i]) for i in range(feats.shape[0])],
    )
    write_container(
        path.with_suffix(".wskn"),
        Container(
            matrix=K,
            epsilon=cfg.sinkhorn.epsilon,
            sigma=sigma,
            kind=MatrixKind.GRAM_WASSERSTEIN,
            sections=((b"EIGP", pack_eigenpairs(fm.eigenvalues, fm.eigenvectors)),),
        ),
    )
    print(
        f"retained {fm.ell} components above {args.threshold!r} at sigma {sigma!r}; "
        f"wrote {path} and {path.with_suffix('.wskn')}"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="wasskern", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="compute and cache the pairwise transport distance matrix")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", help="cache file path (default <output>/distances.wskn)")
    p.add_argument("--limit", type=int, default=0, help="use only the first N images")
    p.add_argument("--verify", action="store_true", help="recompute and compare against the cache")
    p.add_argument("--heatmap", action="store_true", help="also write PGM/PNG heatmaps")
    p.add_argument("--csv", action="store_true", help="also export the matrix as CSV")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("sigma-scan", help="minimum kernel eigenvalue across bandwidths")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--cache", help="distance cache file (default <output>/distances.wskn)")
    p.add_argument("--points", type=int, default=25, help="log-grid size when --sigmas is absent")
    p.add_argument("--sigmas", help="explicit comma-separated bandwidths")
    p.add_argument(
        "--heatmap-sigmas", help="write kernel heatmaps at these comma-separated bandwidths"
    )
    p.set_defaults(func=cmd_sigma_scan)

    p = sub.add_parser("run", help="run the configured classification experiment")
    p.add_argument("--config", help="experiment config file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("predict", help="label images with a saved model")
    p.add_argument("--model", required=True, help="model file written by run")
    p.add_argument("--images", required=True, help="IDX image file or CSV file")
    p.add_argument("--labels", help="IDX label file (required for idx format)")
    p.add_argument("--format", choices=("idx", "csv"), default="idx")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export", help="convert between IDX and CSV")
    p.add_argument("--to", choices=("csv", "idx"), required=True)
    p.add_argument("--images", help="input IDX image file")
    p.add_argument("--labels", help="input IDX label file")
    p.add_argument("--path", help="input CSV file")
    p.add_argument("--out", help="output CSV file")
    p.add_argument("--out-images", help="output IDX image file")
    p.add_argument("--out-labels", help="output IDX label file")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("features", help="dump spectral feature vectors for a dataset")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--sigma", help="kernel bandwidth (default: median pairwise distance)")
    p.add_argument("--threshold", type=float, default=1e-6, help="eigenvalue cutoff")
    p.add_argument("--limit", type=int, default=0, help="use only the first N images")
    p.add_argument("--out", help="output CSV path (default <output>/features.csv)")
    p.set_defaults(func=cmd_features)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
