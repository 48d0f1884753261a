"""Command-line front door.

Subcommands: validate, train, eval, sweep, synth, export. Hyperparameter
flags mirror the usual names (-D transform dimension, --sigma bandwidth,
-E ensemble size, --tasks task count). Reports go to disk; a one-line
summary goes to stdout. Exit codes: 0 success, 1 runtime failure (message
names the failing stage), 2 usage error.

If KLDA_DATA_DIR is set, relative --manifest/--out paths resolve under it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import classify, featstore, harness
from .batch import FeatureBatch, split_by_class
from .errors import KldaError
from .harness import MethodConfig
from .rff import RffConfig

DATA_DIR_ENV_VAR = "KLDA_DATA_DIR"

DEFAULT_TRANSFORM_DIM = 5000
DEFAULT_SIGMA = 1e-3
DEFAULT_ENSEMBLE = 5
DEFAULT_RIDGE = 1e-4
DEFAULT_REPEATS = 3


def _resolve(path: str | None) -> str | None:
    if path is None:
        return None
    base = os.environ.get(DATA_DIR_ENV_VAR)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klda",
        description="Streaming class-incremental classifier engine (NCM / LDA / KLDA / KLDA-E).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_method=True):
        if with_method:
            p.add_argument("--method", choices=("ncm", "lda", "klda", "klda-e"), default="klda")
        p.add_argument("-D", "--transform-dim", type=_positive_int, default=DEFAULT_TRANSFORM_DIM)
        p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
        p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
        p.add_argument("-E", "--ensemble-size", type=_positive_int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--normalize", action="store_true", help="L2-normalize features before the kernel map")

    p = sub.add_parser("validate", help="cross-check a dataset manifest against its feature files")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("train", help="replay a class-incremental stream and report final accuracy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tasks", type=_positive_int, default=1)
    p.add_argument("--repeats", type=_positive_int, default=DEFAULT_REPEATS)
    p.add_argument("--out", default=None, help="report JSON path (default: <dataset>_<method>_report.json)")
    add_common(p)

    p = sub.add_parser("eval", help="evaluate an exported model file on a manifest's test split")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("sweep", help="grid over transform dimension and bandwidth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dims", type=_int_list, required=True, help="comma-separated transform dims")
    p.add_argument("--sigmas", type=_float_list, required=True, help="comma-separated bandwidths")
    p.add_argument("--tasks", type=_positive_int, default=1)
    p.add_argument("--repeats", type=_positive_int, default=1)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("synth", help="generate a synthetic dataset with manifest + feature files")
    p.add_argument("--kind", choices=("rings", "gaussians"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=_positive_int, default=2)
    p.add_argument("--dim", type=_positive_int, default=2)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--radii", type=_float_list, default=[1.0, 3.0])
    p.add_argument("--train-count", type=_positive_int, default=500)
    p.add_argument("--test-count", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="train on the full train split and write a model file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    add_common(p)

    return parser


def _method_config(args, parser) -> MethodConfig:
    ensemble = args.ensemble_size
    if ensemble is not None and args.method != "klda-e":
        parser.error(f"-E/--ensemble-size applies to method klda-e, not {args.method}")
    return MethodConfig(
        method=args.method,
        transform_dim=args.transform_dim,
        sigma=args.sigma,
        ridge=args.ridge,
        ensemble_size=ensemble if ensemble is not None else DEFAULT_ENSEMBLE,
        rff_seed=args.seed,
        normalize=args.normalize,
    )


def cmd_validate(args, parser) -> int:
    problems = featstore.validate_manifest(_resolve(args.manifest))
    for problem in problems:
        print(problem)
    if problems:
        print(f"validate: {len(problems)} problem(s) found", file=sys.stderr)
        return 1
    manifest = featstore.load_manifest(_resolve(args.manifest))
    print(f"validate {manifest.dataset}: ok ({manifest.num_classes} classes, {len(manifest.splits)} splits)")
    return 0


def cmd_train(args, parser) -> int:
    config = _method_config(args, parser)
    manifest_path = _resolve(args.manifest)
    manifest = featstore.load_manifest(manifest_path)
    reports = []
    for rep in range(args.repeats):
        stream = harness.build_stream(manifest_path, args.tasks, shuffle_seed=args.seed + rep)
        rep_config = MethodConfig(
            method=config.method,
            transform_dim=config.transform_dim,
            sigma=config.sigma,
            ridge=config.ridge,
            ensemble_size=config.ensemble_size,
            rff_seed=args.seed + rep,
            normalize=config.normalize,
        )
        report = harness.run_cil(stream, rep_config, dataset=manifest.dataset)
        if report.incomplete:
            print(f"error (train/run): {report.error}", file=sys.stderr)
            return 1
        reports.append(report)
    summary = harness.average_runs(reports)
    out = _resolve(args.out) or f"{manifest.dataset}_{config.method}_report.json"
    doc = {
        "summary": {
            "method": summary.method,
            "dataset": summary.dataset,
            "runs": summary.count,
            "mean_accuracy": summary.mean_accuracy,
            "std_accuracy": summary.std_accuracy,
        },
        "reports": [r.to_dict() for r in reports],
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(
        f"train {config.method} on {manifest.dataset}: final accuracy {summary.format_mean_std()} % "
        f"over {summary.count} run(s); report -> {out}"
    )
    return 0


def _full_train_batches(manifest_path) -> tuple[dict[int, FeatureBatch], FeatureBatch]:
    train = featstore.load_split(manifest_path, "train")
    test = featstore.load_split(manifest_path, "test")
    return split_by_class(train), test


def cmd_export(args, parser) -> int:
    if args.method == "ncm":
        parser.error("export supports lda, klda and klda-e (ncm has no weight/bias form)")
    config = _method_config(args, parser)
    manifest_path = _resolve(args.manifest)
    per_class, _ = _full_train_batches(manifest_path)
    out = _resolve(args.out)
    if args.method == "lda":
        from .stats import GaussianAccumulator

        width = next(iter(per_class.values())).width
        acc = GaussianAccumulator(width)
        for cid, batch in per_class.items():
            acc.update_class(batch, cid)
        classify.save_model(classify.solve_lda(acc, config.ridge), out)
    else:
        width = next(iter(per_class.values())).width
        size = config.ensemble_size if args.method == "klda-e" else 1
        rff_config = RffConfig(width, config.transform_dim, config.sigma, config.rff_seed)
        ensemble = classify.ensemble_fit(rff_config, size, config.ridge, per_class)
        classify.save_ensemble(ensemble, out)
    print(f"export {args.method}: model -> {out}")
    return 0


def cmd_eval(args, parser) -> int:
    manifest_path = _resolve(args.manifest)
    manifest = featstore.load_manifest(manifest_path)
    test = featstore.read_features(manifest.split_path("test"))
    model_path = _resolve(args.model)
    with open(model_path, "rb") as fh:
        magic = fh.read(4)
    if magic == classify.MODEL_MAGIC:
        model = classify.load_model(model_path)
        pred = classify.predict(model, test)
    elif magic == classify.ENSEMBLE_MAGIC:
        ensemble = classify.load_ensemble(model_path)
        pred = classify.ensemble_predict(ensemble, test)
    else:
        raise KldaError(f"{model_path} is neither a model nor an ensemble file")
    accuracy = float(np.mean(pred == test.labels))
    print(f"eval {manifest.dataset}: accuracy {100 * accuracy:.2f} % on {test.n_rows} samples")
    return 0


def cmd_sweep(args, parser) -> int:
    manifest_path = _resolve(args.manifest)
    manifest = featstore.load_manifest(manifest_path)
    stream = harness.build_stream(manifest_path, args.tasks, shuffle_seed=args.seed)
    table = harness.sweep(
        stream,
        dims=args.dims,
        sigmas=args.sigmas,
        repeats=args.repeats,
        ridge=args.ridge,
        base_seed=args.seed,
        jobs=args.jobs,
    )
    out = _resolve(args.out)
    table.to_csv(out)
    failed = sum(1 for c in table.cells if c.error)
    print(
        f"sweep on {manifest.dataset}: {len(table.cells)} cells "
        f"({failed} failed) -> {out}"
    )
    return 0


def cmd_synth(args, parser) -> int:
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    if args.kind == "rings":
        per_class, test = harness.synth_rings(
            args.radii, args.noise, args.train_count, args.test_count, args.seed
        )
        name = "rings"
        provenance_model = f"synthetic:rings(radii={args.radii}, noise={args.noise})"
    else:
        per_class, test = harness.synth_gaussians(
            args.classes, args.dim, args.separation, args.noise,
            args.train_count, args.test_count, args.seed,
        )
        name = "gaussians"
        provenance_model = (
            f"synthetic:gaussians(classes={args.classes}, dim={args.dim}, "
            f"separation={args.separation}, noise={args.noise})"
        )
    rows = sum(b.n_rows for b in per_class.values())
    train_values = np.vstack([per_class[c].values for c in sorted(per_class)])
    train_labels = np.concatenate([per_class[c].labels for c in sorted(per_class)])
    train = FeatureBatch(train_values, train_labels)
    featstore.write_features(train, os.path.join(out_dir, "train.kldf"), featstore.DTYPE_F64)
    featstore.write_features(test, os.path.join(out_dir, "test.kldf"), featstore.DTYPE_F64)
    manifest = featstore.DatasetManifest(
        dataset=name,
        num_classes=len(per_class),
        class_names={cid: f"{name}_{cid}" for cid in per_class},
        splits={
            "train": featstore.SplitRef("train.kldf", rows),
            "test": featstore.SplitRef("test.kldf", test.n_rows),
        },
        provenance={"model": provenance_model, "pooling": "none", "extraction_seed": args.seed},
    )
    featstore.save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    print(
        f"synth {name}: {len(per_class)} classes, {rows} train / {test.n_rows} test rows -> {out_dir}"
    )
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except KldaError as exc:
        print(f"error ({args.command}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error ({args.command}/io): {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
