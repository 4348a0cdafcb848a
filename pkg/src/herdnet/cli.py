"""Command-line entry point.

Subcommands: ``prepare`` (ingest raw data into a window archive), ``train``
(single run, ablation grid, or one-for-one baseline), ``sweep`` (rank or
data-fraction grids), ``gradcheck`` (finite-difference suite). Exit codes:
0 success, 1 internal error, 2 user/input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import __version__
from .archive import ArchiveError, read_archive, write_archive
from .checks import full_suite
from .config import ExperimentConfig
from .data import WindowDataset, TARGET_LEN
from .evaluate import run_cv
from .experiments import (collect_metrics, fraction_sweep, rank_sweep, single_net_config,
                          sweep_rows, with_overrides)
from .ingest import IngestError, ingest_canonical_csv, ingest_public_dataset, prepare_dataset
from .model import build_model, save_checkpoint
from .reports import (Manifest, write_bn_stats_csv, write_confusion_csv, write_curves_csv,
                      write_metrics_json, write_sweep_csv)
from .synthetic import default_spec, generate, spec_from_dict, write_canonical_csv

USER_ERRORS = (IngestError, ArchiveError, ValueError, OSError, json.JSONDecodeError)


def _load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return ExperimentConfig.load(path)


def _load_datasets(paths, manifest: Manifest) -> WindowDataset:
    dataset = None
    for path in paths:
        manifest.add_input(path)
        part = read_archive(path)
        dataset = part if dataset is None else dataset.merge(part)
    return dataset


def cmd_prepare(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("prepare", config={"dataset": args.dataset})
    unknown_rows = None
    if args.dataset == "synthetic":
        if args.synth_spec:
            manifest.add_input(args.synth_spec)
            with open(args.synth_spec, "r", encoding="utf-8") as fh:
                spec = spec_from_dict(json.load(fh))
        else:
            spec = default_spec()
        manifest.data["seed"] = spec.seed
        recordings, meta = generate(spec)
        if args.emit_csv:
            write_canonical_csv(recordings, meta, args.emit_csv)
            manifest.add_output(args.emit_csv)
    elif args.dataset == "csv":
        if not args.inp:
            raise IngestError("--in is required for --dataset csv")
        manifest.add_input(args.inp)
        recordings, meta = ingest_canonical_csv(args.inp)
    else:
        if not args.inp:
            raise IngestError(f"--in is required for --dataset {args.dataset}")
        recordings, meta, unknown_rows = ingest_public_dataset(args.dataset, args.inp)

    dataset, report = prepare_dataset(recordings, meta, target_len=args.target_len,
                                      unknown_rows=unknown_rows)
    write_archive(dataset, out)
    manifest.add_output(out)
    report_path = out.with_suffix(out.suffix + ".ingest.json")
    report.save(report_path)
    manifest.add_output(report_path)
    manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
    total = sum(len(ss) for ss in dataset.species.values())
    print(f"wrote {total} windows across {len(dataset.species)} species to {out}")
    return 0


def _write_run_outputs(cv, out_dir: Path, manifest: Manifest) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.json"
    write_metrics_json(cv.report(), metrics_path)
    manifest.add_output(metrics_path)
    for outcome in cv.rotations:
        r = outcome.rotation
        curves_path = out_dir / f"curves_r{r}.csv"
        write_curves_csv(outcome.train_result.curves, curves_path)
        manifest.add_output(curves_path)
        bn_path = out_dir / f"bn_stats_r{r}.csv"
        write_bn_stats_csv(outcome.bn_stats, bn_path)
        manifest.add_output(bn_path)
        model = build_model(cv.model_config, seed=cv.config["train"]["seed"] + r)
        model.load_state(outcome.model_state)
        ckpt_path = out_dir / f"checkpoint_r{r}.npz"
        save_checkpoint(model, ckpt_path, extra={
            "standardizer_mean": outcome.standardizer.mean.tolist(),
            "standardizer_std": outcome.standardizer.std.tolist(),
            "rotation": r,
            "best_epoch": outcome.train_result.best_epoch,
        })
        manifest.add_output(ckpt_path)
        for s, entry in outcome.metrics.items():
            conf_path = out_dir / f"confusion_r{r}_species{s}.csv"
            names = cv.class_names.get(s) or [f"class{i}" for i in range(entry.confusion.shape[0])]
            write_confusion_csv(entry.confusion, names, conf_path)
            manifest.add_output(conf_path)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    if args.fraction is not None:
        cfg = with_overrides(cfg, fraction=args.fraction)
    if args.single_split:
        cfg = ExperimentConfig(cfg.model, cfg.train, replace(cfg.eval, cross_validate=False),
                               cfg.species)
    out_dir = Path(args.out)
    manifest = Manifest("train", config=cfg.to_dict(), seed=cfg.train.seed)
    dataset = _load_datasets(args.data, manifest)

    if args.single_net is not None:
        joint = len(cfg.species or sorted(dataset.species))
        cfg = single_net_config(cfg, args.single_net, joint)
        cv = run_cv(dataset, cfg)
        _write_run_outputs(cv, out_dir, manifest)
    elif args.ablate:
        modules = [m.strip() for m in args.ablate.split(",") if m.strip()]
        valid = {"no-spconv", "no-sbn"}
        bad = set(modules) - valid
        if bad:
            raise ValueError(f"unknown --ablate modules {sorted(bad)}; expected {sorted(valid)}")
        conv_states = [True, False] if "no-spconv" in modules else [True]
        bn_states = [True, False] if "no-sbn" in modules else [True]
        rows = []
        for use_conv in conv_states:
            for use_bn in bn_states:
                variant = with_overrides(cfg, use_species_conv=use_conv, use_species_bn=use_bn)
                name = f"spconv-{'on' if use_conv else 'off'}_sbn-{'on' if use_bn else 'off'}"
                cv = run_cv(dataset, variant)
                _write_run_outputs(cv, out_dir / name, manifest)
                pooled = collect_metrics([cv])
                rows.extend(sweep_rows("ablation", name, pooled, cv.species_names))
        ablation_path = out_dir / "ablation.csv"
        write_sweep_csv(rows, ablation_path)
        manifest.add_output(ablation_path)
    else:
        cv = run_cv(dataset, cfg)
        _write_run_outputs(cv, out_dir, manifest)
    manifest.write(out_dir / "manifest.json")
    print(f"run complete; outputs in {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    if not args.rank and not args.fraction:
        raise ValueError("sweep needs --rank or --fraction")
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("sweep", config=cfg.to_dict(), seed=cfg.train.seed)
    dataset = _load_datasets(args.data, manifest)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.train.seed]
    species_names = {s: ss.name for s, ss in dataset.species.items()}

    rows = []
    if args.rank:
        ranks = [int(r) for r in args.rank.split(",")]
        rows.extend(rank_sweep(dataset, cfg, ranks, args.frconv, seeds, species_names))
    if args.fraction:
        fractions = [float(f) for f in args.fraction.split(",")]
        rows.extend(fraction_sweep(dataset, cfg, fractions, seeds, species_names,
                                   include_single_net=args.with_single_net))
    sweep_path = out_dir / "sweep.csv"
    write_sweep_csv(rows, sweep_path)
    manifest.add_output(sweep_path)
    manifest.write(out_dir / "manifest.json")
    print(f"sweep complete; {len(rows)} rows in {sweep_path}")
    return 0


def cmd_gradcheck(args) -> int:
    entries = full_suite(seed=args.seed)
    worst = 0.0
    failed = []
    for name, report in entries:
        status = "PASS" if report.ok else "FAIL"
        print(f"[{status}] {name}: max rel err {report.max_rel_error:.3e} "
              f"(tol {report.tol:.1e})")
        worst = max(worst, report.max_rel_error)
        if not report.ok:
            failed.append(name)
    print(f"worst relative error: {worst:.3e}")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdnet",
                                     description="multi-species activity recognition")
    parser.add_argument("--version", action="version", version=f"herdnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest raw data into a window archive")
    p.add_argument("--dataset", required=True,
                   choices=["horse", "sheep", "cattle", "csv", "synthetic"])
    p.add_argument("--in", dest="inp", help="input file or directory")
    p.add_argument("--out", required=True, help="output archive path")
    p.add_argument("--synth-spec", help="JSON synthetic spec (synthetic only)")
    p.add_argument("--emit-csv", help="also write the canonical CSV (synthetic only)")
    p.add_argument("--target-len", type=int, default=TARGET_LEN,
                   help="resampled window length (default 50)")
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train and evaluate per the config")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--data", nargs="+", required=True, help="window archive(s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--fraction", type=float, help="override the training data fraction")
    p.add_argument("--single-split", action="store_true",
                   help="first fold rotation only instead of full cross-validation")
    p.add_argument("--ablate", help="comma list of no-spconv,no-sbn: run the on/off grid")
    p.add_argument("--single-net", type=int, metavar="SPECIES",
                   help="one-for-one baseline on this species id")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="rank or data-fraction grids")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", help="comma list of ranks, e.g. 2,4,8,12,16")
    p.add_argument("--frconv", action="store_true",
                   help="include the full-rank branch comparator row")
    p.add_argument("--fraction", help="comma list of training fractions, e.g. 0.75,0.5")
    p.add_argument("--with-single-net", action="store_true",
                   help="add one-for-one baseline rows to the fraction sweep")
    p.add_argument("--seeds", help="comma list of seeds to pool (default: config seed)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference suite over all operators")
    p.add_argument("--scale", choices=["tiny"], default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except USER_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
