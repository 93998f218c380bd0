"""Command-line entry points: synth, extract, run, report.

``synth`` writes a synthetic control dataset, ``extract`` caches raw
features for a manifest, ``run`` executes a full experiment and emits
its report, and ``report`` re-renders a saved report. Report files are
written atomically (temp file + rename) so aborted runs leave nothing
partially written. Exit codes: 0 success, 2 configuration error,
3 data/load error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .dataset import load_manifest
from .errors import ConfigError, DataError, TraitbenchError
from .evaluate import MetricSummary, RegressionSummary
from .experiment import ExperimentConfig, Report, run_experiment
from .pipeline import FeatureBundle, extract_features
from .synth import SynthManifestSpec, generate_manifest

FORMATS = ("json", "csv", "table")


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

def _summary_to_dict(summary, dim: int) -> dict:
    if isinstance(summary, MetricSummary):
        return {
            "dim": dim,
            "mean_accuracy": summary.mean_accuracy,
            "std": summary.std,
            "ci95": summary.ci95,
            "per_repeat": list(summary.per_repeat),
        }
    return {
        "dim": dim,
        "rmse": summary.rmse,
        "rmse_std": summary.rmse_std,
        "pearson_r": summary.pearson_r,
        "pearson_undefined": summary.pearson_undefined,
        "per_repeat_rmse": list(summary.per_repeat_rmse),
        "per_repeat_pearson": list(summary.per_repeat_pearson),
        "residuals": [list(rec) for rec in summary.residuals],
    }


def report_to_dict(report: Report) -> dict:
    cells = {}
    for method, per_target in report.cells.items():
        cells[method] = {}
        for target, summary in per_target.items():
            if target == "intell":
                dim = report.intelligence_dims[method]
            elif report.per_trait_dims is not None:
                dim = report.per_trait_dims[method][target]
            else:
                dim = report.selected_dims[method]
            cells[method][target] = _summary_to_dict(summary, dim)
    return {
        "config": report.config,
        "provenance": report.provenance,
        "n_samples": report.n_samples,
        "targets": list(report.targets),
        "methods": list(report.methods),
        "dims": list(report.dims),
        "score_matrices": {
            m: {"traits": list(mat.traits), "dims": list(mat.dims), "values": mat.values.tolist()}
            for m, mat in report.score_matrices.items()
        },
        "selected_dims": report.selected_dims,
        "intelligence_dims": report.intelligence_dims,
        "per_trait_dims": report.per_trait_dims,
        "cells": cells,
        "selection": {
            "winners": report.selection.winners,
            "counts": report.selection.counts,
            "selected": report.selection.selected,
        },
    }


def format_accuracy_cell(mean: float, ci95: float) -> str:
    """Accuracy rendered as percent with the confidence interval in
    parentheses, e.g. 0.8156/0.017 -> '81.56(1.7)'."""
    return f"{100.0 * mean:.2f}({100.0 * ci95:.1f})"


def render_csv(data: dict) -> str:
    task = data["config"]["task"]
    lines = []
    if task == "classify":
        lines.append("feature,gender,task,method,target,dim,mean_accuracy,std,ci95")
    else:
        lines.append("feature,gender,task,method,target,dim,rmse,rmse_std,pearson_r,pearson_undefined")
    cfg = data["config"]
    for method in data["methods"]:
        for target in data["targets"]:
            cell = data["cells"][method][target]
            base = f"{cfg['feature']},{cfg['gender']},{task},{method},{target},{cell['dim']}"
            if task == "classify":
                lines.append(f"{base},{cell['mean_accuracy']!r},{cell['std']!r},{cell['ci95']!r}")
            else:
                pr = "" if cell["pearson_r"] is None else repr(cell["pearson_r"])
                lines.append(f"{base},{cell['rmse']!r},{cell['rmse_std']!r},{pr},{cell['pearson_undefined']}")
    return "\n".join(lines) + "\n"


def render_table(data: dict) -> str:
    task = data["config"]["task"]
    out = []
    cfg = data["config"]
    out.append(f"feature={cfg['feature']} gender={cfg['gender']} task={task} n={data['n_samples']}")
    out.append(f"selected method: {data['selection']['selected']} "
               f"(wins: {json.dumps(data['selection']['counts'], sort_keys=True)})")
    width = max(len(t) for t in data["targets"]) + 2
    for method in data["methods"]:
        dim = data["selected_dims"][method]
        mark = " *" if method == data["selection"]["selected"] else ""
        out.append("")
        out.append(f"-- {method}{mark} (dimension {dim}, intelligence dimension {data['intelligence_dims'][method]})")
        for target in data["targets"]:
            cell = data["cells"][method][target]
            if task == "classify":
                rendered = format_accuracy_cell(cell["mean_accuracy"], cell["ci95"])
            else:
                r = cell["pearson_r"]
                rtxt = "r undefined" if cell["pearson_undefined"] else f"r={r:.3f}"
                rendered = f"{cell['rmse']:.4f} ({rtxt})"
            out.append(f"  {target:<{width}}{rendered}")
    return "\n".join(out) + "\n"


def emit_report(data: dict, out_dir: Path, formats=("json",), residual_plots: bool = False) -> list[Path]:
    """Write the report in the requested formats; returns written paths."""
    out_dir = Path(out_dir)
    written = []
    for fmt in formats:
        if fmt not in FORMATS:
            raise ConfigError(f"unknown report format {fmt!r} (valid: {FORMATS})")
        if fmt == "json":
            path = out_dir / "report.json"
            _write_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")
        elif fmt == "csv":
            path = out_dir / "report.csv"
            _write_atomic(path, render_csv(data))
        else:
            path = out_dir / "report.txt"
            _write_atomic(path, render_table(data))
        written.append(path)
    if residual_plots:
        if data["config"]["task"] != "regress":
            raise ConfigError("residual emission requires a regression report")
        for method in data["methods"]:
            for target in data["targets"]:
                cell = data["cells"][method][target]
                rows = ["sample_id,measured,predicted,residual"]
                rows += [f"{sid},{m!r},{p!r},{r!r}" for sid, m, p, r in cell["residuals"]]
                path = out_dir / "residuals" / f"{target}__{method}.csv"
                _write_atomic(path, "\n".join(rows) + "\n")
                written.append(path)
    return written


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _parse_list(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    items = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    return items


def _build_config(args) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise ConfigError(f"config file {cfg_path} does not exist")
        try:
            data = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {cfg_path} is not valid JSON: {exc}") from exc

    overrides = {
        "manifest": args.manifest,
        "feature": args.feature,
        "task": args.task,
        "gender": args.gender,
        "preprocess": args.preprocess,
        "dims": None if args.dims is None else tuple(int(d) for d in _parse_list(args.dims)),
        "methods": _parse_list(args.methods),
        "descriptors": _parse_list(args.descriptors),
        "folds": args.folds,
        "repeats": args.repeats,
        "seed": args.seed,
        "pca_global": True if args.pca_global else None,
        "per_trait_dims": True if args.per_trait_dims else None,
        "stratified": None if args.stratified is None else args.stratified,
        "pooled": True if args.pooled else None,
        "workers": args.workers,
        "msk_keypoints": args.msk_keypoints,
        "pyramid_levels": args.pyramid_levels,
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    for required in ("manifest", "feature", "task"):
        if required not in data or data[required] is None:
            raise ConfigError(f"missing required option --{required}")
    return ExperimentConfig.from_dict(data).validated()


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--manifest", help="manifest path")
    p.add_argument("--feature", help="structural | appearance | fingerprint | fused")
    p.add_argument("--task", help="classify | regress")
    p.add_argument("--gender", help="male | female | all")
    p.add_argument("--preprocess", help="cropped | segmented (appearance features)")
    p.add_argument("--dims", help="comma-separated candidate dimensions")
    p.add_argument("--methods", help="comma-separated method names")
    p.add_argument("--descriptors", help="comma-separated descriptor kinds")
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--pca-global", action="store_true", help="fit PCA on all samples instead of per training fold")
    p.add_argument("--per-trait-dims", action="store_true", help="report each trait at its own best dimension")
    p.add_argument("--stratified", dest="stratified", action="store_true", default=None)
    p.add_argument("--no-stratified", dest="stratified", action="store_false")
    p.add_argument("--pooled", action="store_true", help="pool fold predictions per repeat instead of fold-averaging")
    p.add_argument("--workers", type=int, help="concurrent repeats")
    p.add_argument("--msk-keypoints", dest="msk_keypoints", type=int)
    p.add_argument("--pyramid-levels", dest="pyramid_levels", type=int)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    bundle = None
    if args.features:
        bundle = FeatureBundle.load(args.features)
    report = run_experiment(cfg, bundle=bundle)
    data = report_to_dict(report)
    formats = _parse_list(args.format) or ("json",)
    written = emit_report(data, Path(args.out), formats, residual_plots=args.emit_residuals)
    for path in written:
        print(path)
    return 0


def cmd_extract(args) -> int:
    cfg = ExperimentConfig(
        manifest=args.manifest,
        feature=args.feature,
        task="classify",
        gender=args.gender or "all",
        preprocess=args.preprocess or "cropped",
        msk_keypoints=args.msk_keypoints if args.msk_keypoints is not None else 32,
        pyramid_levels=args.pyramid_levels if args.pyramid_levels is not None else 4,
    ).validated()
    manifest = load_manifest(cfg.manifest).filter_gender(cfg.gender)
    bundle = extract_features(
        manifest,
        cfg.feature,
        preprocess=cfg.preprocess,
        imaging=cfg.imaging_config(),
        descriptor_params=cfg.descriptor_params(),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(out)
    print(out)
    return 0


def cmd_synth(args) -> int:
    signal = _parse_list(args.signal_traits)
    if args.pure_noise:
        signal = ()
    kwargs = dict(n=args.n, seed=args.seed, image_size=args.image_size)
    if signal is not None:
        kwargs["signal_traits"] = signal
    path = generate_manifest(Path(args.out), SynthManifestSpec(**kwargs))
    print(path)
    return 0


def cmd_report(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise DataError(f"report file {path} does not exist")
    data = json.loads(path.read_text())
    formats = _parse_list(args.format) or ("table",)
    written = emit_report(data, Path(args.out), formats, residual_plots=args.emit_residuals)
    for p in written:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="traitbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full experiment and emit its report")
    _add_run_options(p_run)
    p_run.add_argument("--features", help="cached feature bundle (.npz) from `extract`")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--format", help="comma-separated formats: json,csv,table")
    p_run.add_argument("--emit-residuals", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_ext = sub.add_parser("extract", help="extract features once and cache them")
    p_ext.add_argument("--manifest", required=True)
    p_ext.add_argument("--feature", required=True)
    p_ext.add_argument("--preprocess")
    p_ext.add_argument("--gender")
    p_ext.add_argument("--msk-keypoints", dest="msk_keypoints", type=int)
    p_ext.add_argument("--pyramid-levels", dest="pyramid_levels", type=int)
    p_ext.add_argument("--out", required=True, help="output .npz path")
    p_ext.set_defaults(func=cmd_extract)

    p_syn = sub.add_parser("synth", help="generate a synthetic control dataset")
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--n", type=int, default=186)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--image-size", dest="image_size", type=int, default=128)
    p_syn.add_argument("--signal-traits", dest="signal_traits", help="comma-separated trait names")
    p_syn.add_argument("--pure-noise", dest="pure_noise", action="store_true", help="no planted signal")
    p_syn.set_defaults(func=cmd_synth)

    p_rep = sub.add_parser("report", help="re-render a saved report")
    p_rep.add_argument("--report", required=True, help="path to report.json")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--format")
    p_rep.add_argument("--emit-residuals", action="store_true")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TraitbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
