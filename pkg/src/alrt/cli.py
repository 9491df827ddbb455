"""Command-line entry point: ``alrt {ingest,synth,experiment,evaluate,explain,report}``.

Exit codes: 0 success, 2 configuration error, 3 parse error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from . import __version__, kernels
from .active import CVResult, FoldResult, derive_seed, evaluate_model, run_cross_validation
from .errors import AlrtError, ConfigError
from .explain import permutation_importance
from .ingest import load_cohort, scan_cohort, write_jsonl
from .manifest import Manifest, read_manifest
from .metrics import TABLE_COLUMNS, write_table_csv
from .model import load_checkpoint, save_checkpoint
from .preprocess import Pipeline
from .synth import SynthConfig, generate_cohort, write_cohort

log = logging.getLogger("alrt")


def _dump_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def cmd_ingest(args) -> int:
    scan = scan_cohort(args.data, min_hours=args.min_hours)
    if args.cache:
        write_jsonl(scan.patients, args.cache)
    print(f"{len(scan.patients)} retained ({scan.n_septic} septic), {len(scan.dropped)} dropped "
          f"of {scan.n_files} files")
    return 0


def cmd_synth(args) -> int:
    config = SynthConfig(
        n_patients=args.n_patients,
        seed=args.seed,
        length_range=(args.min_hours, args.max_hours),
        positive_rate=args.positive_rate,
        signal_strength=args.signal,
    )
    records = generate_cohort(config)
    write_cohort(records, args.out, config)
    print(f"wrote {len(records)} patients ({sum(r.is_septic for r in records)} septic) to {args.out}")
    return 0


def _resolve_manifest(args) -> Manifest:
    manifest = read_manifest(args.manifest) if args.manifest else Manifest()
    overrides = list(args.set or [])
    if args.data:
        overrides.append(f"dataset_path={args.data}")
    if args.out:
        overrides.append(f"output_dir={args.out}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.method:
        overrides.append(f"methods={','.join(args.method)}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        manifest.set(key, value)
    manifest.validate()
    return manifest


def _write_fold(out: Path, res: FoldResult, manifest: Manifest) -> None:
    """Write one fold's outputs into a scratch directory, then move it into place."""
    final = out / f"fold_{res.fold}"
    tmp = out / f".fold_{res.fold}.tmp"
    shutil.rmtree(tmp, ignore_errors=True)
    (tmp / "checkpoints").mkdir(parents=True)
    res.pipeline.save(tmp / "pipeline.json")
    for row in res.rows:
        save_checkpoint(
            tmp / "checkpoints" / f"{row.name}.json",
            row.params,
            model=row.name,
            fold=res.fold,
            seed=manifest.seed,
            method=row.method,
            percent=row.percent,
            train_config={
                "learning_rate": manifest.learning_rate,
                "gradient_clip": manifest.gradient_clip,
                "hidden_dim": manifest.hidden_dim,
                "warm_start": manifest.warm_start,
                "normalized": manifest.normalized,
            },
        )
    write_table_csv(tmp / "metrics.csv", [(r.name, r.report) for r in res.rows])
    with open(tmp / "transfers.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "round", "patient_id", "score"])
        for method, pool in res.pools.items():
            for rec in pool.history:
                for pid, s in rec.transferred:
                    w.writerow([method, rec.round, pid, repr(s)])
    _dump_json(tmp / "report.json", {
        "fold": res.fold,
        "seed": manifest.seed,
        "test_ids": res.test_ids,
        "models": {r.name: {**r.report.to_dict(), "train_loss": r.train_loss, "test_loss": r.test_loss}
                   for r in res.rows},
    })
    shutil.rmtree(final, ignore_errors=True)
    os.replace(tmp, final)


def _write_summary(out: Path, cv: CVResult, manifest: Manifest) -> None:
    write_table_csv(out / "metrics.csv", list(cv.mean.items()))
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = ["model", "method", "fraction", "auroc", "auprc", "train_loss", "test_loss"]
        w.writerow(keys)
        for row in cv.curves:
            w.writerow([row[k] if isinstance(row[k], str) else repr(row[k]) for k in keys])
    with open(out / "transfers.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "method", "round", "patient_id", "score"])
        for f in cv.folds:
            for method, pool in f.pools.items():
                for rec in pool.history:
                    for pid, s in rec.transferred:
                        w.writerow([f.fold, method, rec.round, pid, repr(s)])
    _dump_json(out / "metrics.json", {
        "manifest": manifest.to_dict(),
        "folds": [f.fold for f in cv.folds],
        "order": list(cv.mean),
        "models": {name: rep.to_dict() for name, rep in cv.mean.items()},
        "per_fold": {str(f.fold): {r.name: r.report.to_dict() for r in f.rows} for f in cv.folds},
    })


def cmd_experiment(args) -> int:
    manifest = _resolve_manifest(args)
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "manifest.json", {**manifest.to_dict(), "backend": kernels.BACKEND, "version": __version__})
    cohort = load_cohort(manifest.dataset_path, min_hours=manifest.min_hours)
    log.info("loaded %d patients from %s", len(cohort), manifest.dataset_path)

    def on_fold(res: FoldResult) -> None:
        _write_fold(out, res, manifest)
        log.info("fold %d done", res.fold)

    cv = run_cross_validation(
        cohort,
        manifest.experiment_config(),
        methods=manifest.methods,
        baseline=manifest.baseline,
        mode=manifest.eval_mode,
        folds=manifest.folds,
        on_fold=on_fold,
    )
    with open(out / "folds.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "fold"])
        w.writerows(cv.plan.assignments.items())
    _write_summary(out, cv, manifest)
    print(f"wrote {len(cv.mean)} model rows to {out / 'metrics.csv'}")
    return 0


def _load_model_inputs(args):
    """Checkpoint, pipeline and evaluation sequences from --run-dir or explicit paths."""
    if args.run_dir:
        run = Path(args.run_dir)
        if args.model is None:
            raise ConfigError("--model is required with --run-dir")
        try:
            echo = json.loads((run / "manifest.json").read_text())
        except OSError as exc:
            raise ConfigError(f"{run} is not an experiment directory") from exc
        fold_dir = run / f"fold_{args.fold}"
        checkpoint = fold_dir / "checkpoints" / f"{args.model}.json"
        pipeline_path = fold_dir / "pipeline.json"
        data = args.data or echo["dataset_path"]
        report = fold_dir / "report.json"
        ids = set(json.loads(report.read_text())["test_ids"]) if report.exists() else None
        min_hours = echo.get("min_hours", 24)
    else:
        if not (args.checkpoint and args.pipeline and args.data):
            raise ConfigError("give --run-dir, or all of --checkpoint, --pipeline and --data")
        checkpoint, pipeline_path, data = Path(args.checkpoint), Path(args.pipeline), args.data
        ids = set(Path(args.ids).read_text().split()) if args.ids else None
        min_hours = 24
    if not checkpoint.exists():
        raise ConfigError(f"checkpoint {checkpoint} not found")
    params, meta = load_checkpoint(checkpoint)
    pipeline = Pipeline.load(pipeline_path)
    records = load_cohort(data, min_hours=min_hours)
    if ids is not None:
        records = [r for r in records if r.patient_id in ids]
    if not records:
        raise ConfigError("no patients to evaluate")
    return params, meta, pipeline, pipeline.transform_all(records)


def cmd_evaluate(args) -> int:
    params, meta, pipeline, seqs = _load_model_inputs(args)
    report, test_loss = evaluate_model(params, seqs, args.mode, pipeline.class_weights)
    name = meta.get("model", "model")
    if args.output:
        write_table_csv(args.output, [(name, report)])
    print(",".join(["Model", *TABLE_COLUMNS]))
    print(",".join([name, *(f"{v:.6f}" for v in report.table_values())]))
    return 0


def cmd_explain(args) -> int:
    params, meta, pipeline, seqs = _load_model_inputs(args)
    seed = derive_seed(args.seed, "explain")
    rep = permutation_importance(params, seqs, pipeline.feature_names, seed=seed, repeats=args.repeats)
    out = Path(args.out) if args.out else (Path(args.run_dir) / f"fold_{args.fold}" if args.run_dir else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    stem = f"importance_{meta.get('model', 'model')}"
    rep.write_csv(out / f"{stem}.csv")
    text = rep.to_text(args.top)
    (out / f"{stem}.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    try:
        summary = json.loads((run / "metrics.json").read_text())
    except OSError as exc:
        raise ConfigError(f"no metrics.json in {run}") from exc
    models = summary["models"]
    width = max(len(n) for n in models) + 2
    print(f"{'Model':<{width}}" + "".join(f"{c:>12}" for c in TABLE_COLUMNS))
    keys = ("specificity", "sensitivity", "precision", "accuracy", "auroc", "auprc")
    for name in summary.get("order", list(models)):
        rep = models[name]
        print(f"{name:<{width}}" + "".join(f"{rep[k]:>12.4f}" for k in keys))
    print(f"(mean over folds {summary['folds']}, seed {summary['manifest']['seed']})")
    curves = run / "curves.csv"
    if curves.exists() and args.curves:
        print()
        print(curves.read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alrt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse a directory of .psv files and apply the 24-hour filter")
    s.add_argument("data")
    s.add_argument("--cache", help="write the retained cohort as JSON lines")
    s.add_argument("--min-hours", type=int, default=24)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic cohort")
    s.add_argument("out")
    s.add_argument("--n-patients", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--positive-rate", type=float, default=0.06)
    s.add_argument("--signal", type=float, default=1.5)
    s.add_argument("--min-hours", type=int, default=24)
    s.add_argument("--max-hours", type=int, default=72)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("experiment", help="5-fold active-learning experiment plus baseline")
    s.add_argument("--manifest", help="flat key = value manifest")
    s.add_argument("--data", help="override dataset_path")
    s.add_argument("--out", help="override output_dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--method", action="append", choices=["lc", "margin", "entropy"],
                   help="restrict to one or more sampling methods")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any manifest key")
    s.set_defaults(func=cmd_experiment)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "evaluate a checkpoint"),
        ("explain", cmd_explain, "permutation feature importance for a checkpoint"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--run-dir")
        s.add_argument("--fold", type=int, default=0)
        s.add_argument("--model", help="model row name, e.g. RNN or RNN_60e")
        s.add_argument("--checkpoint")
        s.add_argument("--pipeline")
        s.add_argument("--data")
        s.add_argument("--ids", help="file of patient ids to restrict to")
        s.set_defaults(func=func)
        if name == "evaluate":
            s.add_argument("--mode", choices=["timestep", "patient"], default="timestep")
            s.add_argument("--output")
        else:
            s.add_argument("--seed", type=int, default=0)
            s.add_argument("--repeats", type=int, default=5)
            s.add_argument("--top", type=int, default=10)
            s.add_argument("--out")

    s = sub.add_parser("report", help="print the results table of an experiment")
    s.add_argument("run_dir")
    s.add_argument("--curves", action="store_true", help="also print the curve table")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AlrtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
