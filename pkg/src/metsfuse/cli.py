"""Command-line front end for the whole pipeline.

One executable with subcommands: synth, prepare, train, cv, grid, sweep,
explain. Every output directory receives a manifest recording the run id,
config snapshot, and digests of inputs and written artifacts; downstream
commands verify the digests of the artifacts they consume.

Exit codes: 0 success, 1 usage, 2 data or I/O error, 3 numeric failure.
METSFUSE_LOG sets verbosity (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError
from .evaluation import cross_validate, imbalance_sweep
from .explain import lime_text, pfi
from .models import DivergenceError, FusionClassifier
from .models.grid import DEFAULT_GRID, grid_search, trials_to_csv, trials_to_json
from .nn import CheckpointError, NonFiniteError
from .pipeline import (
    guard_fit_records,
    partition_indices,
    prepare_dataset,
    record_labels,
)
from .records import (
    read_panels,
    read_records,
    write_audit_log,
    write_panels,
    write_records,
    write_records_csv,
)
from .split import SplitPlan
from .synth import CohortSpec, generate

log = logging.getLogger("metsfuse")

FROZEN_TS = "1970-01-01T00:00:00+00:00"
MANIFEST = "manifest.json"

HP_KEYS = (
    "reduced_dim", "hidden_dim", "dropout_p", "alpha", "epsilon_margin",
    "learning_rate", "batch_size", "max_epochs", "patience", "seed",
    "weight_decay",
)
ENC_KEYS = ("vocab_size", "d_model", "n_heads", "n_blocks", "ff_dim", "max_len", "pool")


def _setup_logging() -> None:
    name = os.environ.get("METSFUSE_LOG", "warning").strip().lower()
    level = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _now(frozen: bool) -> str:
    return FROZEN_TS if frozen else datetime.now(timezone.utc).isoformat()


def write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: dict[str, Path],
    artifacts: list[str],
    frozen: bool,
) -> dict:
    input_digests = {str(p): _sha256(Path(p)) for p in inputs.values()}
    run_id = hashlib.sha256(
        json.dumps(
            {"command": command, "config": config, "inputs": input_digests},
            sort_keys=True,
        ).encode()
    ).hexdigest()[:12]
    manifest = {
        "run_id": run_id,
        "command": command,
        "version": __version__,
        "created": _now(frozen),
        "config": config,
        "inputs": input_digests,
        "artifacts": {name: _sha256(out_dir / name) for name in sorted(artifacts)},
    }
    (out_dir / MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def verify_artifacts(data_dir: Path, names: list[str]) -> None:
    """Check that the named artifacts still match the directory's manifest."""
    mpath = data_dir / MANIFEST
    if not mpath.exists():
        raise DataError(f"{data_dir}: no {MANIFEST}; run the producing command first")
    manifest = _read_json(mpath)
    stored = manifest.get("artifacts", {})
    for name in names:
        path = data_dir / name
        if not path.exists():
            raise DataError(f"{data_dir}: missing artifact {name}")
        if name not in stored:
            raise DataError(f"{data_dir}: artifact {name} not listed in its manifest")
        actual = _sha256(path)
        if actual != stored[name]:
            raise DataError(
                f"{data_dir}: digest mismatch for {name}: manifest has "
                f"{stored[name][:12]}.., file is {actual[:12]}.."
            )


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = _read_json(Path(path))
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return cfg


def _resolve(config: dict, args, keys) -> dict:
    """Config-file values overridden by explicitly given flags."""
    out = {}
    for key in keys:
        if key in config:
            out[key] = config[key]
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
    return out


def _clf_overrides(args, architecture: str) -> dict:
    config = _load_config(getattr(args, "config", None))
    overrides = _resolve(config, args, HP_KEYS + ENC_KEYS + ("feature_alpha",))
    if architecture == "TS_H":
        overrides["alpha"] = 1.0  # ablation trains on cross-entropy alone
    return overrides


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_prepared(data_dir: Path, need_dataset: bool = True):
    names = ["labels.json", "split.json"] + (["dataset.jsonl"] if need_dataset else ["cleaned.jsonl"])
    verify_artifacts(data_dir, names)
    records = read_records(data_dir / ("dataset.jsonl" if need_dataset else "cleaned.jsonl"))
    labels = {
        str(k): bool(v) for k, v in _read_json(data_dir / "labels.json").items()
    }
    plan = SplitPlan.from_dict(_read_json(data_dir / "split.json"))
    return records, labels, plan


# ------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    spec = CohortSpec.load(args.spec) if args.spec else CohortSpec()
    if args.seed is not None:
        spec.seed = args.seed
    spec.validate()
    panels, records = generate(spec)
    out = _out_dir(args)
    write_records(out / "records.jsonl", records)
    write_panels(out / "panels.json", panels)
    spec.save(out / "cohort_spec.json")
    inputs = {"spec": Path(args.spec)} if args.spec else {}
    write_manifest(
        out, "synth", spec.to_dict(), inputs,
        ["records.jsonl", "panels.json", "cohort_spec.json"], args.frozen_clock,
    )
    print(f"wrote {len(records)} records for {len(panels)} subjects to {out}")
    return 0


def cmd_prepare(args) -> int:
    config = _load_config(args.config)
    opts = _resolve(config, args, ("seed", "test_fraction", "k", "ratio", "level", "feature_alpha"))
    opts.setdefault("seed", 0)
    opts.setdefault("test_fraction", 0.25)
    opts.setdefault("k", 3)
    opts.setdefault("ratio", 0.5)
    opts.setdefault("level", "subject")
    opts.setdefault("feature_alpha", 0.01)
    no_augment = bool(args.no_augment or config.get("no_augment", False))

    records = read_records(args.records)
    panels = read_panels(args.panels)
    prep = prepare_dataset(
        records,
        panels,
        seed=int(opts["seed"]),
        test_fraction=float(opts["test_fraction"]),
        k=int(opts["k"]),
        target_ratio=None if no_augment else float(opts["ratio"]),
        level=str(opts["level"]),
        feature_alpha=float(opts["feature_alpha"]),
    )
    out = _out_dir(args)
    write_records(out / "cleaned.jsonl", prep.cleaned)
    write_records(out / "dataset.jsonl", prep.records)
    write_records_csv(out / "dataset.csv", prep.records)
    write_audit_log(out / "audit.jsonl", prep.audit)
    (out / "labels.json").write_text(
        json.dumps({k: bool(v) for k, v in sorted(prep.labels_by_subject.items())}, indent=2)
        + "\n"
    )
    (out / "feature_spec.json").write_text(
        json.dumps(prep.feature_spec.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    (out / "split.json").write_text(
        json.dumps(prep.plan.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    write_manifest(
        out, "prepare", {**opts, "no_augment": no_augment},
        {"records": Path(args.records), "panels": Path(args.panels)},
        [
            "cleaned.jsonl", "dataset.jsonl", "dataset.csv", "audit.jsonl",
            "labels.json", "feature_spec.json", "split.json",
        ],
        args.frozen_clock,
    )
    n_aug = len(prep.records) - prep.n_cleaned
    print(
        f"cleaned {prep.n_cleaned} records ({len(prep.audit)} audit entries), "
        f"augmented +{n_aug}, features {list(prep.feature_spec.features)}"
    )
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    records, labels, plan = _load_prepared(data_dir)
    overrides = _clf_overrides(args, args.arch)
    val_fold = args.val_fold
    train_idx, val_idx, _ = partition_indices(records, plan, val_fold)
    guard_fit_records(train_idx, plan, records, val_fold=val_fold)
    y = record_labels(records, labels)
    clf = FusionClassifier(architecture=args.arch, **overrides)
    clf.fit(
        [records[i] for i in train_idx], y[train_idx],
        [records[i] for i in val_idx], y[val_idx],
    )
    out = _out_dir(args)
    clf.save(out)
    clf.history_.to_csv(out / "history.csv")
    write_manifest(
        out, "train",
        {"architecture": args.arch, "val_fold": val_fold, **clf.get_params()},
        {"data": data_dir / "dataset.jsonl"},
        ["checkpoint.bin", "vocab.tsv", "feature_spec.json", "history.csv"],
        args.frozen_clock,
    )
    print(
        f"trained {args.arch} (val fold {val_fold}): best epoch "
        f"{clf.history_.best_epoch}, val AUROC {clf.history_.best_val_auroc:.4f}"
    )
    return 0


def cmd_cv(args) -> int:
    data_dir = Path(args.data)
    records, labels, plan = _load_prepared(data_dir)
    overrides = _clf_overrides(args, args.arch)
    report = cross_validate(
        args.arch, None, records, labels, plan, clf_params=overrides, jobs=args.jobs
    )
    out = _out_dir(args)
    (out / "report.csv").write_text(report.to_csv_text("val"))
    (out / "report_test.csv").write_text(report.to_csv_text("test"))
    (out / "report.json").write_text(report.to_json() + "\n")
    write_manifest(
        out, "cv", {"architecture": args.arch, "jobs": args.jobs, **overrides},
        {"data": data_dir / "dataset.jsonl"},
        ["report.csv", "report_test.csv", "report.json"],
        args.frozen_clock,
    )
    agg_val = report.aggregate("val")["AUROC"]
    agg_test = report.aggregate("test")["AUROC"]
    print(
        f"{args.arch} {plan.k}-fold: val AUROC {agg_val['mean']:.4f} "
        f"({agg_val['std']:.4f}), test AUROC {agg_test['mean']:.4f} "
        f"({agg_test['std']:.4f})"
    )
    return 0


def _csv_list(text: str, cast) -> tuple:
    try:
        return tuple(cast(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise DataError(f"bad list value {text!r}: {exc}") from exc


def cmd_grid(args) -> int:
    data_dir = Path(args.data)
    records, labels, plan = _load_prepared(data_dir)
    archs = _csv_list(args.archs, str)
    grid = {
        "reduced_dim": _csv_list(args.reduced_dims, int)
        if args.reduced_dims else DEFAULT_GRID["reduced_dim"],
        "hidden_dim": _csv_list(args.hidden_dims, int)
        if args.hidden_dims else DEFAULT_GRID["hidden_dim"],
        "dropout_p": _csv_list(args.dropouts, float)
        if args.dropouts else DEFAULT_GRID["dropout_p"],
    }
    overrides = _clf_overrides(args, archs[0] if len(archs) == 1 else "")
    trials = grid_search(
        list(archs), records, labels, plan, grid=grid,
        clf_params=overrides, jobs=args.jobs,
    )
    out = _out_dir(args)
    (out / "trials.csv").write_text(trials_to_csv(trials))
    (out / "trials.json").write_text(trials_to_json(trials) + "\n")
    write_manifest(
        out, "grid",
        {"architectures": list(archs), "grid": {k: list(v) for k, v in grid.items()},
         "jobs": args.jobs, **overrides},
        {"data": data_dir / "dataset.jsonl"},
        ["trials.csv", "trials.json"],
        args.frozen_clock,
    )
    best = trials[0]
    print(
        f"{len(trials)} trials; best {best.architecture} {best.params} "
        f"mean val AUROC {best.mean_auroc:.4f}"
    )
    return 0


def cmd_sweep(args) -> int:
    data_dir = Path(args.data)
    records, labels, _ = _load_prepared(data_dir, need_dataset=False)
    overrides = _clf_overrides(args, args.arch)
    ratios = _csv_list(args.ratios, float)
    seeds = _csv_list(args.seeds, int)
    table = imbalance_sweep(
        args.arch, None, records, labels,
        ratios=ratios, seeds=seeds, k=args.k, test_fraction=args.test_fraction,
        clf_params=overrides, jobs=args.jobs,
    )
    out = _out_dir(args)
    (out / "sweep.csv").write_text(table.to_csv_text())
    (out / "sweep.json").write_text(table.to_json() + "\n")
    write_manifest(
        out, "sweep",
        {"architecture": args.arch, "ratios": list(ratios), "seeds": list(seeds),
         "k": args.k, "test_fraction": args.test_fraction, "jobs": args.jobs,
         **overrides},
        {"data": data_dir / "cleaned.jsonl"},
        ["sweep.csv", "sweep.json"],
        args.frozen_clock,
    )
    for ratio in table.ratios:
        print(f"ratio {ratio:.2f}: mean test AUROC {table.mean(ratio):.4f}")
    return 0


def cmd_explain(args) -> int:
    if not args.pfi and args.lime is None:
        raise DataError("explain: nothing to do; pass --pfi and/or --lime INDEX")
    model_dir = Path(args.model)
    verify_artifacts(model_dir, ["checkpoint.bin", "vocab.tsv", "feature_spec.json"])
    clf = FusionClassifier.load(model_dir)
    data_dir = Path(args.data)
    records, labels, plan = _load_prepared(data_dir)
    out = _out_dir(args)
    artifacts = []
    if args.pfi:
        test_idx = list(plan.test_record_ids)
        test = [records[i] for i in test_idx]
        y = record_labels(records, labels)[test_idx]
        report = pfi(clf, test, y, k=args.reps, seed=args.seed or 0)
        (out / "pfi.json").write_text(report.to_json() + "\n")
        (out / "pfi.csv").write_text(report.to_csv_text())
        artifacts += ["pfi.json", "pfi.csv"]
        top = report.ranked()[0]
        print(f"pfi: baseline AUROC {report.baseline:.4f}, top feature {top.feature} "
              f"({top.importance:+.4f})")
    if args.lime is not None:
        if not 0 <= args.lime < len(records):
            raise DataError(f"explain: record index {args.lime} outside 0..{len(records) - 1}")
        rec = records[args.lime]
        rep = lime_text(
            clf, rec, n_samples=args.samples, kernel_width=args.kernel_width,
            seed=args.seed or 0,
        )
        (out / "lime.json").write_text(rep.to_json() + "\n")
        (out / "lime.html").write_text(rep.to_html() + "\n")
        artifacts += ["lime.json", "lime.html"]
        best = rep.ranked()[0]
        print(f"lime: record {rec.subject_id}/{rec.day_index}, R2 {rep.r2:.3f}, "
              f"top token {best.token!r} ({best.weight:+.4f})")
    write_manifest(
        out, "explain",
        {"model": str(model_dir), "pfi": bool(args.pfi), "lime": args.lime,
         "reps": args.reps, "samples": args.samples,
         "kernel_width": args.kernel_width, "seed": args.seed or 0},
        {"model": model_dir / "checkpoint.bin", "data": data_dir / "dataset.jsonl"},
        artifacts, args.frozen_clock,
    )
    return 0


# ------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, jobs: bool = False) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file; flags win")
    p.add_argument("--frozen-clock", action="store_true", dest="frozen_clock",
                   help="write a fixed timestamp for reproducible manifests")
    if jobs:
        p.add_argument("--jobs", type=int, default=1)


def _add_clf_flags(p: argparse.ArgumentParser) -> None:
    for key in ("reduced_dim", "hidden_dim", "batch_size", "max_epochs", "patience",
                "vocab_size", "d_model", "n_heads", "n_blocks", "ff_dim", "max_len"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int, default=None, dest=key)
    for key in ("dropout_p", "alpha", "epsilon_margin", "learning_rate",
                "weight_decay", "feature_alpha"):
        p.add_argument(f"--{key.replace('_', '-')}", type=float, default=None, dest=key)
    p.add_argument("--pool", choices=("mean", "cls"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metsfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"metsfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--spec", default=None, help="cohort spec JSON (defaults used if omitted)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="clean, split, augment, select features")
    p.add_argument("--records", required=True)
    p.add_argument("--panels", required=True)
    p.add_argument("--test-fraction", type=float, default=None, dest="test_fraction")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None, help="minority target share")
    p.add_argument("--no-augment", action="store_true", dest="no_augment")
    p.add_argument("--level", choices=("subject", "record"), default=None)
    p.add_argument("--feature-alpha", type=float, default=None, dest="feature_alpha")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model on one fold rotation")
    p.add_argument("--data", required=True, help="prepare output directory")
    p.add_argument("--arch", default="TS_HCL")
    p.add_argument("--val-fold", type=int, default=1, dest="val_fold")
    _add_clf_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="cross-validate over all fold rotations")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", default="TS_HCL")
    _add_clf_flags(p)
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--archs", default="TS_HCL", help="comma-separated architectures")
    p.add_argument("--reduced-dims", default=None, dest="reduced_dims")
    p.add_argument("--hidden-dims", default=None, dest="hidden_dims")
    p.add_argument("--dropouts", default=None)
    _add_clf_flags(p)
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sweep", help="class-imbalance ratio sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", default="TS_HCL")
    p.add_argument("--ratios", default="0.3,0.35,0.4,0.45,0.5")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--test-fraction", type=float, default=0.25, dest="test_fraction")
    _add_clf_flags(p)
    _add_common(p, jobs=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explain", help="feature importance and token attribution")
    p.add_argument("--model", required=True, help="train output directory")
    p.add_argument("--data", required=True)
    p.add_argument("--pfi", action="store_true")
    p.add_argument("--reps", type=int, default=50, help="shuffles per feature")
    p.add_argument("--lime", type=int, default=None, metavar="INDEX",
                   help="record index to explain token by token")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--kernel-width", type=float, default=0.75, dest="kernel_width")
    _add_common(p)
    p.set_defaults(func=cmd_explain)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (NonFiniteError, DivergenceError) as exc:
        log.debug("numeric failure", exc_info=True)
        print(f"metsfuse: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, CheckpointError, OSError) as exc:
        log.debug("data error", exc_info=True)
        print(f"metsfuse: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
