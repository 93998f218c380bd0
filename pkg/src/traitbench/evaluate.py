"""Repeated cross-validation, the three summary metrics, and method selection.

The protocol: split the samples into ``folds`` non-overlapping subsets
(sizes differing by at most one), train on all but one fold and test on
the held-out fold, and repeat the whole procedure ``repeats`` times
with fresh splits. Classification reports the mean accuracy across
repeats with a 95% normal-approximation confidence interval
1.96 * std / sqrt(repeats); regression reports the RMSE averaged over
repeats and the Pearson correlation of the pooled held-out predictions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .learners import (
    ClassifierSpec,
    RegressorSpec,
    fit_classifier,
    fit_regressor,
    predict_classifier,
    predict_regressor,
)

CI_FACTOR = 1.96

# Canonical method orders used for every tie-break.
CLASSIFIER_ORDER = ("parzen", "dtree", "knn", "gnb", "rforest")
REGRESSOR_ORDER = ("ols", "ridge", "lasso", "pinv", "knn", "svr")


@dataclass(frozen=True)
class CVConfig:
    folds: int = 10
    repeats: int = 30
    master_seed: int = 0
    stratified: bool = True   # classification only
    pooled: bool = False      # pool fold predictions instead of fold-averaging
    workers: int = 1          # concurrent repeats

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError(f"folds must be at least 2, got {self.folds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be at least 1, got {self.repeats}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic per-(repeat, ...) seed from the master seed."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *(int(k) & 0xFFFFFFFF for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)


def make_folds(n: int, cfg: CVConfig, repeat_index: int, labels: np.ndarray | None = None) -> list[np.ndarray]:
    """Index arrays of the held-out folds for one repeat.

    Fold sizes differ by at most one. With ``labels`` given (stratified
    mode), per-fold class counts stay within one of the ideal ratio.
    """
    if n < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} samples for {cfg.folds}-fold splits, got {n}")
    rng = np.random.default_rng(derive_seed(cfg.master_seed, repeat_index, 0xF01D))
    if labels is None:
        order = rng.permutation(n)
        return [fold for fold in np.array_split(order, cfg.folds)]

    labels = np.asarray(labels)
    folds: list[list[int]] = [[] for _ in range(cfg.folds)]
    offset = 0
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        base, rem = divmod(len(members), cfg.folds)
        pos = 0
        for j in range(cfg.folds):
            take = base + (1 if (j - offset) % cfg.folds < rem else 0)
            folds[j].extend(members[pos: pos + take].tolist())
            pos += take
        offset = (offset + rem) % cfg.folds
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


@dataclass(frozen=True)
class MetricSummary:
    mean_accuracy: float
    std: float
    ci95: float
    per_repeat: tuple[float, ...]


@dataclass(frozen=True)
class RegressionSummary:
    rmse: float
    rmse_std: float
    pearson_r: float | None
    pearson_undefined: bool
    per_repeat_rmse: tuple[float, ...]
    per_repeat_pearson: tuple[float | None, ...]
    # One record per sample: (sample id, measured, mean held-out
    # prediction across repeats, residual).
    residuals: tuple[tuple[str, float, float, float], ...]


def confidence_interval(std: float, repeats: int) -> float:
    if repeats < 1:
        raise ValueError(f"repeats must be positive, got {repeats}")
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    return CI_FACTOR * std / np.sqrt(repeats)


def rmse(measured, predicted) -> float:
    measured = np.asarray(measured, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if measured.shape != predicted.shape:
        raise ValueError(f"length mismatch: {measured.shape} vs {predicted.shape}")
    if measured.size == 0:
        raise ValueError("rmse of empty series")
    return float(np.sqrt(np.mean((measured - predicted) ** 2)))


def pearson(measured, predicted) -> float | None:
    """Pearson correlation; None when either series has zero variance."""
    measured = np.asarray(measured, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if measured.shape != predicted.shape:
        raise ValueError(f"length mismatch: {measured.shape} vs {predicted.shape}")
    if measured.size < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = measured - measured.mean()
    dy = predicted - predicted.mean()
    sx = np.sqrt((dx**2).sum())
    sy = np.sqrt((dy**2).sum())
    if sx == 0.0 or sy == 0.0:
        return None
    return float((dx * dy).sum() / (sx * sy))


def _summarize_accuracy(per_repeat: list[float]) -> MetricSummary:
    arr = np.asarray(per_repeat, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return MetricSummary(
        mean_accuracy=float(arr.mean()),
        std=std,
        ci95=confidence_interval(std, arr.size),
        per_repeat=tuple(arr.tolist()),
    )


def _run_repeats(repeats: int, workers: int, job):
    """Evaluate ``job(repeat_index)`` for every repeat, results in repeat order."""
    if workers <= 1:
        return [job(r) for r in range(repeats)]
    results = [None] * repeats
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(job, r): r for r in range(repeats)}
        for fut, r in futures.items():
            results[r] = fut.result()
    return results


def cross_validate_classify(spec: ClassifierSpec, X, y, cfg: CVConfig, preprocess=None) -> MetricSummary:
    """Repeated k-fold accuracy of one classifier.

    ``preprocess`` optionally maps (X_train, X_test) -> (X_train', X_test')
    per fold, e.g. a training-fold-only PCA.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if len(np.unique(y)) < 2:
        raise ValueError("need both classes present overall")

    def one_repeat(r: int) -> float:
        folds = make_folds(n, cfg, r, labels=y if cfg.stratified else None)
        seed_r = derive_seed(cfg.master_seed, r, spec.seed, 0x5EED)
        fold_accs, correct, total = [], 0, 0
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold, assume_unique=False)
            Xtr, Xte = X[train], X[fold]
            if preprocess is not None:
                Xtr, Xte = preprocess(Xtr, Xte)
            try:
                model = fit_classifier(spec.with_seed(seed_r), Xtr, y[train])
                pred = predict_classifier(model, Xte)
            except Exception as exc:
                raise RuntimeError(f"classifier {spec.kind!r} failed on repeat {r}, fold of size {len(fold)}: {exc}") from exc
            hits = int((pred == y[fold]).sum())
            fold_accs.append(hits / len(fold))
            correct += hits
            total += len(fold)
        return correct / total if cfg.pooled else float(np.mean(fold_accs))

    return _summarize_accuracy(_run_repeats(cfg.repeats, cfg.workers, one_repeat))


def cross_validate_regress(spec: RegressorSpec, X, y, cfg: CVConfig, preprocess=None, sample_ids=None) -> RegressionSummary:
    """Repeated k-fold regression error of one regressor."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    ids = [str(i) for i in range(n)] if sample_ids is None else [str(s) for s in sample_ids]

    def one_repeat(r: int) -> np.ndarray:
        folds = make_folds(n, cfg, r, labels=None)
        seed_r = derive_seed(cfg.master_seed, r, spec.seed, 0x5EED)
        predictions = np.empty(n)
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold, assume_unique=False)
            Xtr, Xte = X[train], X[fold]
            if preprocess is not None:
                Xtr, Xte = preprocess(Xtr, Xte)
            try:
                model = fit_regressor(spec.with_seed(seed_r), Xtr, y[train])
                predictions[fold] = predict_regressor(model, Xte)
            except Exception as exc:
                raise RuntimeError(f"regressor {spec.kind!r} failed on repeat {r}, fold of size {len(fold)}: {exc}") from exc
        return predictions

    all_preds = np.stack(_run_repeats(cfg.repeats, cfg.workers, one_repeat))
    per_rmse = tuple(rmse(y, all_preds[r]) for r in range(cfg.repeats))
    per_pearson = tuple(pearson(y, all_preds[r]) for r in range(cfg.repeats))
    pooled_measured = np.tile(y, cfg.repeats)
    pooled_pred = all_preds.ravel()
    pooled_r = pearson(pooled_measured, pooled_pred)

    mean_pred = all_preds.mean(axis=0)
    residuals = tuple(
        (ids[i], float(y[i]), float(mean_pred[i]), float(y[i] - mean_pred[i])) for i in range(n)
    )
    arr = np.asarray(per_rmse)
    return RegressionSummary(
        rmse=float(arr.mean()),
        rmse_std=float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        pearson_r=pooled_r,
        pearson_undefined=pooled_r is None,
        per_repeat_rmse=per_rmse,
        per_repeat_pearson=per_pearson,
        residuals=residuals,
    )


@dataclass(frozen=True)
class MethodSelection:
    winners: dict[str, str]   # trait -> winning method
    counts: dict[str, int]    # method -> number of traits won
    selected: str


def select_best_method(table: dict[str, dict[str, float]], method_order: tuple[str, ...], mode: str = "maximize") -> MethodSelection:
    """Pick the method that wins the most traits.

    ``table`` maps method -> trait -> score. Per trait the best-scoring
    method is marked (ties to the earliest method in canonical order);
    the method with the most marks wins (same tie rule).
    """
    methods = [m for m in method_order if m in table]
    if not methods:
        raise ValueError("empty method table")
    traits = list(table[methods[0]].keys())
    for m in methods:
        if set(table[m].keys()) != set(traits):
            raise ValueError(f"method {m!r} covers different traits")

    sign = 1.0 if mode == "maximize" else -1.0
    winners: dict[str, str] = {}
    counts = {m: 0 for m in methods}
    for trait in traits:
        best = methods[0]
        for m in methods[1:]:
            if sign * table[m][trait] > sign * table[best][trait]:
                best = m
        winners[trait] = best
        counts[best] += 1
    selected = max(methods, key=lambda m: (counts[m], -methods.index(m)))
    return MethodSelection(winners=winners, counts=counts, selected=selected)
