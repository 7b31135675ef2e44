"""Command-line interface.

Exit codes: 0 success, 1 runtime failure (bad data, missing files, module
errors), 2 usage errors (bad flags, metrics that need labels without them).
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import statistics
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import __version__, dataio, linproj, metrics, nnsearch, plot
from ._threads import thread_limit
from .errors import HNNEError
from .hierarchy import build_hierarchy, partition_at_level
from .serialize import load_model, save_model
from .transform import fit_full, transform
from .translate import DEFAULT_RADIUS_FRACTION, TranslateParams

log = logging.getLogger("hnne")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Raised for input combinations argparse cannot catch on its own."""


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("values must be >= 1")
    return values


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="data file, or a generator name")
    p.add_argument("--synthetic", help='generator spec, e.g. "blobs,n=5000,dim=64,clusters=10"')
    p.add_argument("--format", choices=["csv", "f32-raw"], help="input format (default: from suffix)")
    header = p.add_mutually_exclusive_group()
    header.add_argument("--header", dest="has_header", action="store_true", default=None)
    header.add_argument("--no-header", dest="has_header", action="store_false")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker cap (default: $HNNE_THREADS or 1); results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")


def _dataset_spec(args, labels_path=None) -> dataio.DatasetSpec:
    if args.synthetic:
        spec = dataio.parse_synthetic(args.synthetic)
        spec.params.setdefault("seed", args.seed)
        spec.labels_path = labels_path
        return spec
    if not args.input:
        raise UsageError("one of --input or --synthetic is required")
    if args.input in dataio.GENERATORS and not Path(args.input).exists():
        spec = dataio.DatasetSpec(args.input, params={"seed": args.seed})
    else:
        spec = dataio.DatasetSpec(args.input, format=args.format, has_header=args.has_header)
    spec.labels_path = labels_path
    return spec


def _describe(args) -> str:
    return args.synthetic or args.input


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> int:
    spec = _dataset_spec(args, args.labels)
    params = TranslateParams.for_dim(
        args.dim,
        guarantee=args.guarantee,
        shrink=args.shrink,
        radius_fraction=args.radius_fraction,
        inflation=args.inflate,
        ann_backend=args.backend,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    x, labels = dataio.load(spec)
    t_load = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = fit_full(
        x, args.dim, params,
        init=args.init, pca_threshold=args.pca_threshold,
        transform_level=args.transform_level, threads=args.threads,
    )
    t_fit = time.perf_counter() - t0
    dataio.save_matrix(args.out, res.embedding)
    if args.model:
        save_model(res.model, args.model)
    if args.labels_out and labels is not None:
        dataio.save_labels(args.labels_out, labels)
    manifest = {
        "command": "fit",
        "version": __version__,
        "input": _describe(args),
        "n_points": int(x.shape[0]),
        "input_dim": int(x.shape[1]),
        "dim": args.dim,
        "seed": args.seed,
        "threads": args.threads,
        "init": linproj.canonical_mode(args.init),
        "pca_threshold": args.pca_threshold,
        "pca_level": res.pca_level,
        "transform_level": res.model.lookup_level,
        "params": {
            "radius_fraction": params.radius_fraction,
            "shrink": params.shrink,
            "guarantee": params.guarantee,
            "inflation": params.inflation,
            "inflation_ratio": params.inflation_ratio,
            "backend": params.ann_backend,
            "resolved_backend": nnsearch.resolve_backend(params.ann_backend, *x.shape),
        },
        "base_groups": res.hierarchy.base_partition.n_groups,
        "level_sizes": res.hierarchy.level_sizes(),
        "hierarchy_levels": len(res.hierarchy.levels),
        "load_seconds": t_load,
        "wall_clock_seconds": t_fit,
        "outputs": {"embedding": str(args.out), "model": args.model and str(args.model)},
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
    }
    _write_json(args.manifest or f"{args.out}.manifest.json", manifest)
    log.info("fit %s: %d x %d -> %d in %.2f s, levels %s", _describe(args), *x.shape, args.dim, t_fit,
             res.hierarchy.level_sizes())
    return EXIT_OK


# ---------------------------------------------------------------- transform


def cmd_transform(args) -> int:
    model = load_model(args.model)
    x, _ = dataio.load(_dataset_spec(args))
    with thread_limit(args.threads):
        y = transform(model, x)
    dataio.save_matrix(args.out, y)
    return EXIT_OK


# ---------------------------------------------------------------- metrics


def cmd_metrics(args) -> int:
    wanted = {m.strip() for m in args.metrics.split(",") if m.strip()} if args.metrics else None
    unknown = (wanted or set()) - {"trust", "knn", "cta"}
    if unknown:
        raise UsageError(f"unknown metrics {sorted(unknown)}; choose from trust, knn, cta")
    if wanted is None:
        wanted = {"trust", "knn", "cta"} if args.labels else {"trust"}
    if wanted & {"knn", "cta"} and not args.labels:
        raise UsageError("k-NN accuracy and CTA need --labels")
    high, labels = dataio.load(dataio.DatasetSpec(args.high, labels_path=args.labels))
    low, _ = dataio.load(dataio.DatasetSpec(args.low))
    if "cta" in wanted and len(np.unique(labels)) < 3:
        if args.metrics:
            raise UsageError(f"CTA needs at least 3 classes, labels have {len(np.unique(labels))}")
        wanted.discard("cta")
    with thread_limit(args.threads):
        report = metrics.evaluate(
            high, low, labels,
            trust_k=args.trust_k if "trust" in wanted else None,
            knn_ks=args.knn_k if "knn" in wanted else (),
            folds=args.folds,
            cta="cta" in wanted,
            seed=args.seed,
        )
    line = report.to_json()
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- plot / synth / labels


def cmd_plot(args) -> int:
    emb, labels = dataio.load(dataio.DatasetSpec(args.input, format=args.format, labels_path=args.labels))
    plot.render_scatter(emb, labels, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = dataio.parse_synthetic(args.spec)
    spec.params.setdefault("seed", args.seed)
    x, labels = dataio.generate(spec)
    dataio.save_matrix(args.out, x)
    if args.labels_out and labels is not None:
        dataio.save_labels(args.labels_out, labels)
    return EXIT_OK


def cmd_labels(args) -> int:
    x, _ = dataio.load(_dataset_spec(args))
    with thread_limit(args.threads):
        h = build_hierarchy(x, args.backend, args.seed)
    if not h.levels and args.level == 0:
        part = h.base_partition
    else:
        part = partition_at_level(h, args.level)
    dataio.save_labels(args.out, part.labels)
    log.info("level %d: %d groups", args.level, part.n_groups)
    return EXIT_OK


# ---------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    rows = []
    header = ["dataset", "n", "dim", "repeats", "load_s", "load_peak_bytes", "fit_mean_s", "fit_std_s",
              "fit_min_s", "fit_max_s"]
    print("\t".join(header))
    for name in args.dataset or []:
        spec = _bench_spec(name, args.seed, args.mmap)
        tracemalloc.start()
        t0 = time.perf_counter()
        x, _ = dataio.load(spec)
        t_load = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        times = []
        if not args.load_only:
            params = TranslateParams.for_dim(args.dim, ann_backend=args.backend, seed=args.seed)
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                fit_full(x, args.dim, params, threads=args.threads)
                times.append(time.perf_counter() - t0)
        row = {
            "dataset": name,
            "n": int(x.shape[0]),
            "dim": int(x.shape[1]),
            "repeats": len(times),
            "load_s": t_load,
            "load_peak_bytes": int(peak),
            "in_memory_bytes": int(x.nbytes),
            "fit_times_s": times,
            "fit_mean_s": statistics.fmean(times) if times else None,
            "fit_std_s": statistics.stdev(times) if len(times) > 1 else None,
            "fit_min_s": min(times) if times else None,
            "fit_max_s": max(times) if times else None,
        }
        rows.append(row)
        print("\t".join(_fmt(row[h]) for h in header), flush=True)
        del x
    if args.manifest:
        _write_json(args.manifest, {
            "command": "bench", "version": __version__, "seed": args.seed, "threads": args.threads,
            "dim": args.dim, "backend": args.backend, "load_only": args.load_only, "results": rows,
            "platform": {"python": platform.python_version(), "numpy": np.__version__,
                         "machine": platform.machine()},
        })
    return EXIT_OK


def _bench_spec(name: str, seed: int, mmap: bool) -> dataio.DatasetSpec:
    head = name.split(",", 1)[0]
    if head in dataio.GENERATORS and not Path(name).exists():
        spec = dataio.parse_synthetic(name)
        spec.params.setdefault("seed", seed)
        return spec
    return dataio.DatasetSpec(name, mmap=mmap)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hnne", description="Embed data through a hierarchy of 1-NN graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="embed a dataset")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--labels", help="labels file (copied to --labels-out for synthetic data)")
    p.add_argument("--labels-out", help="write generator labels here")
    p.add_argument("--dim", type=_positive_int, default=2, help="target dimension")
    p.add_argument("--out", required=True, help="embedding output (.csv or .f32)")
    p.add_argument("--model", help="model output file")
    p.add_argument("--manifest", help="run manifest (default: <out>.manifest.json)")
    p.add_argument("--init", default="pca-centroids",
                   choices=list(linproj.MODES) + list(linproj.MODE_ALIASES))
    p.add_argument("--pca-threshold", type=_positive_int, default=linproj.DEFAULT_PCA_THRESHOLD)
    p.add_argument("--radius-fraction", type=float, default=DEFAULT_RADIUS_FRACTION)
    p.add_argument("--shrink", type=float, default=None,
                   help="radius multiplier (default 1 for d <= 3, 3/5 otherwise)")
    p.add_argument("--guarantee", action="store_true", help="enforce the containment bound (shrink <= 3/5)")
    p.add_argument("--inflate", action="store_true", help="inflate squeezed clusters (2-D only)")
    p.add_argument("--transform-level", type=_nonneg_int, default=None)
    p.add_argument("--backend", choices=nnsearch.BACKENDS, default="auto")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="project new points with a saved model")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("metrics", help="score an embedding")
    _add_common(p)
    p.add_argument("--high", required=True, help="original data")
    p.add_argument("--low", required=True, help="embedding")
    p.add_argument("--labels")
    p.add_argument("--metrics", help="comma list of trust,knn,cta (default: all that the inputs allow)")
    p.add_argument("--trust-k", type=_positive_int, default=metrics.DEFAULT_TRUST_K)
    p.add_argument("--knn-k", type=_int_list, default=list(metrics.DEFAULT_KNN_SWEEP))
    p.add_argument("--folds", type=_positive_int, default=metrics.DEFAULT_FOLDS)
    p.add_argument("--out", help="also write the JSON line here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("plot", help="SVG scatter plot of a 2-D embedding")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "f32-raw"])
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("spec", help='e.g. "blobs,n=5000,dim=64,clusters=10" or "uniform-square,n=100000"')
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time fits over datasets")
    _add_common(p)
    p.add_argument("dataset", nargs="*", help="files or generator specs")
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--dim", type=_positive_int, default=2)
    p.add_argument("--backend", choices=nnsearch.BACKENDS, default="auto")
    p.add_argument("--load-only", action="store_true", help="only time and measure loading")
    p.add_argument("--mmap", action="store_true", help="memory-map f32-raw inputs")
    p.add_argument("--manifest", help="write results as JSON here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("labels", help="export the hierarchy partition at one level")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--level", type=_nonneg_int, default=0)
    p.add_argument("--backend", choices=nnsearch.BACKENDS, default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_labels)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with thread_limit(getattr(args, "threads", None)):
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hnne {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HNNEError, OSError) as exc:
        print(f"hnne {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
