"""Configuration-driven experiment runner.

One run evaluates every configured method at every candidate dimension
for all 20 traits plus intelligence on one feature/gender slice, picks
each method's working dimension from the 20-trait score matrix (the
row-normalized-sum rule), reports summaries at that dimension, and
marks the overall winning method by per-trait win counts. Intelligence
gets its own dimension per method: the single best accuracy (or lowest
error). Everything is a pure function of (manifest contents, config,
master seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import __version__
from .dataset import INTELLIGENCE, TRAIT_NAMES, load_manifest
from .descriptors import DESCRIPTOR_KINDS, DescriptorParams, MskParams
from .errors import ConfigError, DataError
from .evaluate import (
    CLASSIFIER_ORDER,
    REGRESSOR_ORDER,
    CVConfig,
    MethodSelection,
    MetricSummary,
    RegressionSummary,
    _run_repeats,
    confidence_interval,
    derive_seed,
    make_folds,
    pearson,
    rmse,
    select_best_method,
)
from .imaging import ImagingConfig
from .learners import (
    ClassifierSpec,
    RegressorSpec,
    fit_classifier,
    fit_regressor,
    predict_classifier,
    predict_regressor,
)
from .pipeline import FEATURE_KINDS, FeatureBundle, FeatureSpace, extract_features
from .reduce import AccuracyMatrix, select_dimension

CLASSIFY_DIMS = (5, 10, 15, 20, 25, 30, 35, 40, 50)
REGRESS_DIMS = (2, 5, 8, 10, 15, 20, 30, 40, 50, 60, 70)

TASKS = ("classify", "regress")
GENDER_FILTERS = ("male", "female", "all")
PREPROCESS_MODES = ("cropped", "segmented")


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    feature: str
    task: str
    gender: str = "all"
    preprocess: str = "cropped"
    descriptors: tuple[str, ...] = DESCRIPTOR_KINDS
    dims: tuple[int, ...] = ()
    methods: tuple[str, ...] = ()
    folds: int = 10
    repeats: int = 30
    seed: int = 0
    stratified: bool = True
    pooled: bool = False
    pca_global: bool = False
    per_trait_dims: bool = False
    fusion_dim: int = 400
    workers: int = 1
    msk_keypoints: int = 32
    pyramid_levels: int = 4
    crop_size: int = 200
    fill_value: int = 128

    def validated(self) -> "ExperimentConfig":
        """Fill task defaults and reject invalid combinations up front."""
        if self.feature not in FEATURE_KINDS:
            raise ConfigError(f"feature must be one of {FEATURE_KINDS}, got {self.feature!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.gender not in GENDER_FILTERS:
            raise ConfigError(f"gender must be one of {GENDER_FILTERS}, got {self.gender!r}")
        if self.preprocess not in PREPROCESS_MODES:
            raise ConfigError(f"preprocess must be one of {PREPROCESS_MODES}, got {self.preprocess!r}")
        unknown = set(self.descriptors) - set(DESCRIPTOR_KINDS)
        if unknown:
            raise ConfigError(f"unknown descriptors: {sorted(unknown)}")
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be at least 1, got {self.repeats}")
        if self.fusion_dim < 1:
            raise ConfigError(f"fusion_dim must be positive, got {self.fusion_dim}")

        valid_methods = CLASSIFIER_ORDER if self.task == "classify" else REGRESSOR_ORDER
        methods = tuple(self.methods) or valid_methods
        bad = [m for m in methods if m not in valid_methods]
        if bad:
            raise ConfigError(f"methods {bad} are not valid for task {self.task!r} (valid: {valid_methods})")

        dims = tuple(self.dims) or (CLASSIFY_DIMS if self.task == "classify" else REGRESS_DIMS)
        if any(d < 1 for d in dims):
            raise ConfigError(f"candidate dimensions must be positive, got {dims}")
        dims = tuple(sorted(set(int(d) for d in dims)))
        return replace(self, methods=methods, dims=dims)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(data)
        for key in ("descriptors", "dims", "methods"):
            if key in coerced and coerced[key] is not None:
                coerced[key] = tuple(coerced[key])
        return ExperimentConfig(**coerced)

    def imaging_config(self) -> ImagingConfig:
        return ImagingConfig(
            crop_size=self.crop_size,
            fill_value=self.fill_value,
            pyramid_levels=self.pyramid_levels,
        )

    def descriptor_params(self) -> DescriptorParams:
        return DescriptorParams(msk=MskParams(keypoints=self.msk_keypoints))

    def cv_config(self) -> CVConfig:
        return CVConfig(
            folds=self.folds,
            repeats=self.repeats,
            master_seed=self.seed,
            stratified=self.stratified,
            pooled=self.pooled,
            workers=self.workers,
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class Report:
    config: dict
    provenance: dict
    n_samples: int
    targets: tuple[str, ...]
    methods: tuple[str, ...]
    dims: tuple[int, ...]
    score_matrices: dict[str, AccuracyMatrix]      # method -> 20-trait matrix
    selected_dims: dict[str, int]                  # method -> working dimension
    intelligence_dims: dict[str, int]
    per_trait_dims: dict[str, dict[str, int]] | None
    cells: dict[str, dict[str, MetricSummary | RegressionSummary]]
    selection: MethodSelection


def _method_spec(task: str, method: str):
    if task == "classify":
        return ClassifierSpec(kind=method)
    return RegressorSpec(kind=method)


def _evaluate_target(cfg, bundle_space, y, task, sample_ids):
    """All (method, dim, repeat) results for one prediction target."""
    n = len(y)
    cv = cfg.cv_config()
    methods = cfg.methods
    dims = cfg.dims
    stratify = task == "classify" and cfg.stratified

    def one_repeat(r: int):
        folds = make_folds(n, cv, r, labels=y if stratify else None)
        fold_hits = {m: {d: [] for d in dims} for m in methods}
        row_preds = {m: {d: np.zeros(n) for d in dims} for m in methods} if task == "regress" else None
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold, assume_unique=False)
            view = bundle_space.fold(train, fold)
            for d in dims:
                Xtr, Xte = view.at(d)
                for m in methods:
                    spec = _method_spec(task, m)
                    spec = spec.with_seed(derive_seed(cv.master_seed, r, spec.seed, 0x5EED))
                    if task == "classify":
                        model = fit_classifier(spec, Xtr, y[train])
                        pred = predict_classifier(model, Xte)
                        fold_hits[m][d].append(float((pred == y[fold]).mean()))
                    else:
                        model = fit_regressor(spec, Xtr, y[train])
                        row_preds[m][d][fold] = predict_regressor(model, Xte)
        if task == "classify":
            if cv.pooled:
                sizes = np.array([len(f) for f in folds], dtype=float)

                def acc_of(m, d):
                    return float(np.asarray(fold_hits[m][d]) @ sizes / sizes.sum())
            else:
                def acc_of(m, d):
                    return float(np.mean(fold_hits[m][d]))

            return {m: {d: acc_of(m, d) for d in dims} for m in methods}
        return row_preds

    results = _run_repeats(cv.repeats, cv.workers, one_repeat)

    out = {}
    for m in methods:
        out[m] = {}
        for d in dims:
            if task == "classify":
                arr = np.array([results[r][m][d] for r in range(cv.repeats)])
                std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                out[m][d] = MetricSummary(
                    mean_accuracy=float(arr.mean()),
                    std=std,
                    ci95=confidence_interval(std, arr.size),
                    per_repeat=tuple(arr.tolist()),
                )
            else:
                P = np.stack([results[r][m][d] for r in range(cv.repeats)])
                per_rmse = tuple(rmse(y, P[r]) for r in range(cv.repeats))
                per_pearson = tuple(pearson(y, P[r]) for r in range(cv.repeats))
                pooled_r = pearson(np.tile(y, cv.repeats), P.ravel())
                mean_pred = P.mean(axis=0)
                arr = np.asarray(per_rmse)
                out[m][d] = RegressionSummary(
                    rmse=float(arr.mean()),
                    rmse_std=float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                    pearson_r=pooled_r,
                    pearson_undefined=pooled_r is None,
                    per_repeat_rmse=per_rmse,
                    per_repeat_pearson=per_pearson,
                    residuals=tuple(
                        (str(sample_ids[i]), float(y[i]), float(mean_pred[i]), float(y[i] - mean_pred[i]))
                        for i in range(n)
                    ),
                )
    return out


class _GlobalSpace:
    """pca-global protocol: one chain fitted on all rows, shared by folds."""

    def __init__(self, space: FeatureSpace, n: int):
        self._view = space.fold(np.arange(n), np.arange(n))

    def fold(self, train, test):
        view = self._view

        class _Slice:
            def at(self, dim, _train=train, _test=test):
                full_train, _ = view.at(dim)
                return full_train[_train], full_train[_test]

        return _Slice()


def run_experiment(cfg: ExperimentConfig, bundle: FeatureBundle | None = None) -> Report:
    cfg = cfg.validated()
    manifest = load_manifest(cfg.manifest).filter_gender(cfg.gender)
    n = len(manifest.samples)
    if n < cfg.folds:
        raise DataError(f"{n} samples in slice but {cfg.folds}-fold splits requested")

    if bundle is None:
        bundle = extract_features(
            manifest,
            cfg.feature,
            preprocess=cfg.preprocess,
            imaging=cfg.imaging_config(),
            descriptor_params=cfg.descriptor_params(),
            descriptors=cfg.descriptors,
        )
    else:
        if bundle.feature != cfg.feature:
            raise ConfigError(f"feature bundle holds {bundle.feature!r}, config wants {cfg.feature!r}")
        if tuple(bundle.sample_ids) != tuple(manifest.sample_ids):
            raise ConfigError("feature bundle sample ids do not match the manifest slice")

    space = FeatureSpace(bundle, max_dim=max(cfg.dims), fusion_dim=cfg.fusion_dim)
    if cfg.pca_global:
        space = _GlobalSpace(space, n)

    targets = TRAIT_NAMES + (INTELLIGENCE,)
    all_cells: dict[str, dict[str, dict[int, object]]] = {}
    for target in targets:
        y = manifest.binary_labels(target) if cfg.task == "classify" else manifest.regression_targets(target)
        if cfg.task == "classify" and len(np.unique(y)) < 2:
            raise DataError(f"target {target!r} has a single class in this slice; cannot cross-validate")
        all_cells[target] = _evaluate_target(cfg, space, y, cfg.task, manifest.sample_ids)

    maximize = cfg.task == "classify"

    def cell_score(summary) -> float:
        return summary.mean_accuracy if maximize else summary.rmse

    score_matrices = {}
    selected_dims = {}
    intelligence_dims = {}
    for m in cfg.methods:
        values = np.array([[cell_score(all_cells[t][m][d]) for d in cfg.dims] for t in TRAIT_NAMES])
        matrix = AccuracyMatrix(traits=TRAIT_NAMES, dims=cfg.dims, values=values)
        score_matrices[m] = matrix
        selected_dims[m] = select_dimension(matrix, mode="maximize" if maximize else "minimize")
        intel_scores = [cell_score(all_cells[INTELLIGENCE][m][d]) for d in cfg.dims]
        best = max(intel_scores) if maximize else min(intel_scores)
        intelligence_dims[m] = cfg.dims[intel_scores.index(best)]

    per_trait = None
    if cfg.per_trait_dims:
        per_trait = {}
        for m in cfg.methods:
            per_trait[m] = {}
            for t in TRAIT_NAMES:
                scores = [cell_score(all_cells[t][m][d]) for d in cfg.dims]
                best = max(scores) if maximize else min(scores)
                per_trait[m][t] = cfg.dims[scores.index(best)]

    def reporting_dim(method: str, target: str) -> int:
        if target == INTELLIGENCE:
            return intelligence_dims[method]
        if per_trait is not None:
            return per_trait[method][target]
        return selected_dims[method]

    cells = {
        m: {t: all_cells[t][m][reporting_dim(m, t)] for t in targets} for m in cfg.methods
    }
    table = {m: {t: cell_score(cells[m][t]) for t in TRAIT_NAMES} for m in cfg.methods}
    order = CLASSIFIER_ORDER if maximize else REGRESSOR_ORDER
    selection = select_best_method(table, order, mode="maximize" if maximize else "minimize")

    return Report(
        config=cfg.to_dict(),
        provenance={
            "config_sha256": cfg.config_hash(),
            "master_seed": cfg.seed,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "n_samples": n,
        },
        n_samples=n,
        targets=targets,
        methods=cfg.methods,
        dims=cfg.dims,
        score_matrices=score_matrices,
        selected_dims=selected_dims,
        intelligence_dims=intelligence_dims,
        per_trait_dims=per_trait,
        cells=cells,
        selection=selection,
    )
