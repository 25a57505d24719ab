"""Command-line orchestrator.

Subcommands wire the full pipeline: generate or ingest datasets, train
one surrogate teacher per source, distill the target network against the
frozen teacher checkpoints, evaluate, and compare against the matched
supervised baseline.  Every phase is a pure function of (config, master
seed); run directories are named by config digest plus timestamp.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from srtc import data as rss
from srtc import distill as distilling
from srtc import evaluation
from srtc.checkpoint import CheckpointError
from srtc.config import ConfigError, RunConfig, dump_run_config, load_run_config
from srtc.distill import DistillConfig, ablate, distill
from srtc.experts import (TeacherBundle, load_teacher_bundle,
                          save_teacher_bundle, train_experts_for_sources)
from srtc.runio import MetricWriter, create_run_dir, write_json
from srtc.seeding import derive_seed

log = logging.getLogger("srtc")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("SRTC_LOG_LEVEL", "info").lower()
    if level not in _LOG_LEVELS:
        raise ConfigError(
            f"SRTC_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, "
            f"got {level!r}")
    logging.basicConfig(level=_LOG_LEVELS[level],
                        format="%(levelname)s %(name)s: %(message)s")


# Data plumbing ---------------------------------------------------------

def _materialize_raw(spec, master_seed: int) -> rss.FingerprintDataset:
    """Dataset in raw dB, either sampled or ingested per its spec."""
    if spec.synthetic is not None:
        env = rss.generate_environment(
            spec.synthetic, derive_seed(master_seed, "env", spec.name))
        return rss.sample_fingerprints(
            env, spec.samples, derive_seed(master_seed, "data", spec.name),
            name=spec.name)
    return rss.load_csv(spec.csv_path, spec.schema or rss.default_schema(),
                        name=spec.name)


def _prepare_datasets(cfg: RunConfig):
    """Raw-dB sources plus the target train/test split."""
    sources = [_materialize_raw(s, cfg.seed) for s in cfg.data.sources]
    target = _materialize_raw(cfg.data.target, cfg.seed)
    train, test = rss.split(target, cfg.data.train_fraction,
                            derive_seed(cfg.seed, "split", target.name))
    if cfg.data.target_subsample is not None:
        train, _ = rss.split(train, cfg.data.target_subsample,
                             derive_seed(cfg.seed, "subsample"))
    return sources, train, test


def _write_datasets(data_dir: Path, cfg: RunConfig, sources, train, test):
    for ds in sources:
        rss.save_csv(ds, data_dir / f"{ds.name}.csv")
    target_name = cfg.data.target.name
    rss.save_csv(train, data_dir / f"{target_name}_train.csv")
    rss.save_csv(test, data_dir / f"{target_name}_test.csv")


def _read_datasets(data_dir: Path, cfg: RunConfig):
    schema = rss.default_schema()
    sources = [rss.load_csv(data_dir / f"{s.name}.csv", schema, name=s.name)
               for s in cfg.data.sources]
    target_name = cfg.data.target.name
    train = rss.load_csv(data_dir / f"{target_name}_train.csv", schema,
                         name=f"{target_name}/train")
    test = rss.load_csv(data_dir / f"{target_name}_test.csv", schema,
                        name=f"{target_name}/test")
    return sources, train, test


def _resolve_datasets(cfg: RunConfig, data_dir: str | None):
    if data_dir:
        return _read_datasets(Path(data_dir), cfg)
    return _prepare_datasets(cfg)


def _normalize_all(cfg: RunConfig, *datasets):
    return tuple(rss.normalize_rss(ds, cfg.data.min_rss_db)
                 for ds in datasets)


# Phase helpers ---------------------------------------------------------

def _train_teachers(cfg: RunConfig, sources_norm, out_dir: Path,
                    metrics_path: Path, workers: int) -> list[Path]:
    digest = cfg.digest()
    with MetricWriter(metrics_path) as metrics:
        bundles = train_experts_for_sources(
            sources_norm, cfg.expert, cfg.seed, metrics=metrics,
            workers=workers)
    paths = []
    for ds, bundle in zip(sources_norm, bundles):
        path = out_dir / f"teacher_{ds.name}.srtc"
        save_teacher_bundle(bundle, path, config_digest=digest)
        paths.append(path)
        log.info("teacher for %s saved to %s", ds.name, path)
    return paths


def _load_teachers(paths) -> list[TeacherBundle]:
    return [load_teacher_bundle(p) for p in paths]


def _teacher_paths(teachers_dir: str) -> list[Path]:
    paths = sorted(Path(teachers_dir).glob("teacher_*.srtc"))
    if not paths:
        raise ConfigError(f"no teacher checkpoints in {teachers_dir}")
    return paths


def _distill_one(cfg: RunConfig, train_norm, teachers, constraints,
                 metrics_path: Path):
    run_cfg = replace(cfg.distilling,
                      seed=derive_seed(cfg.seed, "distill"),
                      constraints=frozenset(constraints))
    with MetricWriter(metrics_path) as metrics:
        model, estimator = distill(train_norm, teachers, run_cfg,
                                   metrics=metrics)
    return model, estimator


def _evaluate_and_write(cfg: RunConfig, model, test_norm, reports_dir: Path,
                        label: str) -> evaluation.EvalReport:
    report = evaluation.evaluate(model, test_norm,
                                 thresholds=cfg.eval.thresholds_m,
                                 model_name=label)
    write_json(reports_dir / f"{label}.json", report.as_dict())
    evaluation.write_cdf_csv(report, reports_dir / f"{label}_cdf.csv",
                             grid_step=cfg.eval.cdf_grid_m)
    return report


# Subcommands -----------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sources, train, test = _prepare_datasets(cfg)
    _write_datasets(out, cfg, sources, train, test)
    for ds in sources + [train, test]:
        log.info("wrote %s (%d rows, %d anchors)", ds.name, ds.n_samples,
                 ds.n_anchors)
    print(f"datasets written to {out}")
    return 0


def cmd_train_experts(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sources, _, _ = _resolve_datasets(cfg, args.data)
    sources_norm = _normalize_all(cfg, *sources)
    paths = _train_teachers(cfg, sources_norm, out,
                            out / "expert_training.jsonl", args.workers)
    print(f"{len(paths)} teacher bundle(s) written to {out}")
    return 0


def cmd_distill(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    teachers = _load_teachers(_teacher_paths(args.teachers))
    train = rss.load_csv(args.data, rss.default_schema(), name="target/train")
    (train_norm,) = _normalize_all(cfg, train)
    model, _ = _distill_one(cfg, train_norm, teachers,
                            cfg.distilling.constraints,
                            out / "distilling.jsonl")
    model_path = out / "distilled.srtc"
    distilling.save_specialized_model(model, model_path,
                                      config_digest=cfg.digest())
    print(f"distilled model written to {model_path}")
    return 0


def cmd_evaluate(args) -> int:
    model = distilling.load_specialized_model(args.model)
    cfg = load_run_config(args.config) if args.config else RunConfig()
    test = rss.load_csv(args.data, rss.default_schema(), name="eval")
    (test_norm,) = _normalize_all(cfg, test)
    report = evaluation.evaluate(model, test_norm,
                                 thresholds=cfg.eval.thresholds_m,
                                 model_name=str(args.model))
    print(f"mae_m={report.mae_m:.4f} p75_m={report.p75_m:.4f} "
          f"p95_m={report.p95_m:.4f} n={report.n_samples}")
    for radius, prob in report.threshold_probes:
        print(f"P(error<{radius:g} m)={prob:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", report.as_dict())
        evaluation.write_cdf_csv(report, out / "cdf.csv",
                                 grid_step=cfg.eval.cdf_grid_m)
        print(f"report written to {out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    digest = cfg.digest()
    run_dir = create_run_dir(args.out, digest)
    log.info("run directory %s", run_dir)
    dump_run_config(cfg, run_dir / "config.yaml")

    sources, train, test = _prepare_datasets(cfg)
    _write_datasets(run_dir / "data", cfg, sources, train, test)
    # Reload through the CSV path so the pipeline exercises ingestion.
    sources, train, test = _read_datasets(run_dir / "data", cfg)
    sources_norm = _normalize_all(cfg, *sources)
    train_norm, test_norm = _normalize_all(cfg, train, test)

    teacher_paths = _train_teachers(
        cfg, sources_norm, run_dir / "teachers",
        run_dir / "metrics" / "expert_training.jsonl", args.workers)

    # Distilling consumes only the teacher checkpoints plus target data.
    teachers = _load_teachers(teacher_paths)
    enhanced, _ = _distill_one(cfg, train_norm, teachers,
                               cfg.distilling.constraints,
                               run_dir / "metrics" / "distilling.jsonl")
    distilling.save_specialized_model(
        enhanced, run_dir / "models" / "enhanced.srtc", config_digest=digest)
    baseline, _ = _distill_one(cfg, train_norm, [], frozenset(),
                               run_dir / "metrics" / "baseline.jsonl")
    distilling.save_specialized_model(
        baseline, run_dir / "models" / "baseline.srtc", config_digest=digest)

    reports_dir = run_dir / "reports"
    enhanced_report = _evaluate_and_write(cfg, enhanced, test_norm,
                                          reports_dir, "enhanced")
    baseline_report = _evaluate_and_write(cfg, baseline, test_norm,
                                          reports_dir, "baseline")
    deltas = evaluation.compare(baseline_report, enhanced_report)
    write_json(reports_dir / "compare.json", deltas.as_dict())

    print(f"run directory: {run_dir}")
    print(f"baseline mae_m={baseline_report.mae_m:.4f}")
    print(f"enhanced mae_m={enhanced_report.mae_m:.4f}")
    print(f"mae improvement: {deltas.mae_pct:+.2f}%")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sources, train, test = _resolve_datasets(cfg, args.data)
    sources_norm = _normalize_all(cfg, *sources)
    train_norm, test_norm = _normalize_all(cfg, train, test)
    if args.teachers:
        teachers = _load_teachers(_teacher_paths(args.teachers))
    else:
        paths = _train_teachers(cfg, sources_norm, out,
                                out / "expert_training.jsonl", args.workers)
        teachers = _load_teachers(paths)
    run_cfg = replace(cfg.distilling, seed=derive_seed(cfg.seed, "distill"))
    grid = ablate(train_norm, test_norm, teachers, run_cfg,
                  thresholds=cfg.eval.thresholds_m)
    rows = []
    for mask, report in grid:
        label = "+".join(sorted(mask)) or "none"
        rows.append({"mask": sorted(mask), "mae_m": report.mae_m,
                     "p75_m": report.p75_m, "p95_m": report.p95_m})
        print(f"mask={label:<12} mae_m={report.mae_m:.4f} "
              f"p75_m={report.p75_m:.4f} p95_m={report.p95_m:.4f}")
    write_json(out / "ablation.json", {"grid": rows})
    return 0


# Parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srtc",
        description="Two-phase surrogate-teacher representation transfer "
                    "for RSS-fingerprint localization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate or ingest datasets as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the master seed")
    p.add_argument("--out", default="data")

    p = add("train-experts", cmd_train_experts,
            "train one surrogate teacher per source dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data", default=None,
                   help="data directory from gen-data (default: regenerate)")
    p.add_argument("--out", default="teachers")
    p.add_argument("--workers", type=int, default=1)

    p = add("distill", cmd_distill,
            "distill the target network from teacher checkpoints")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--teachers", required=True,
                   help="directory holding teacher_*.srtc checkpoints")
    p.add_argument("--data", required=True, help="target training CSV")
    p.add_argument("--out", default="distilled")

    p = add("evaluate", cmd_evaluate, "evaluate a model checkpoint on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)

    p = add("pipeline", cmd_pipeline,
            "generate -> train experts -> distill -> evaluate -> compare")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="runs")
    p.add_argument("--workers", type=int, default=1)

    p = add("ablate", cmd_ablate, "constraint-mask ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--teachers", default=None)
    p.add_argument("--out", default="ablation")
    p.add_argument("--workers", type=int, default=1)

    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, rss.CsvFormatError, ValueError,
            RuntimeError, OSError) as err:
        log.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
