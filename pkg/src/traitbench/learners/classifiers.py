"""The five classification methods behind uniform fit/predict calls.

All models standardize features internally with training statistics.
A training set containing a single class yields a constant predictor
for every method. Deterministic given the spec seed; only the random
forest (feature subsampling + bootstrap) actually consumes it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatchError
from ._tree import bootstrap_indices, build_tree, predict_tree
from ._util import Standardizer, check_matrix, mix_seed

CLASSIFIER_KINDS = ("parzen", "dtree", "knn", "gnb", "rforest")

_GNB_VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    k: int = 5            # knn neighbor count
    n_trees: int = 100    # rforest ensemble size
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be positive, got {self.n_trees}")

    def with_seed(self, seed: int) -> "ClassifierSpec":
        return ClassifierSpec(kind=self.kind, k=self.k, n_trees=self.n_trees, seed=seed)


@dataclass(frozen=True)
class ClassifierModel:
    spec: ClassifierSpec
    standardizer: Standardizer
    n_features: int
    majority_class: int
    constant: int | None    # set when training saw a single class
    state: object | None


def _validate_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    vals = set(np.unique(y).tolist())
    if not vals <= {0, 1}:
        raise ValueError(f"labels must be binary 0/1, got values {sorted(vals)}")
    return y.astype(np.int64)


def fit_classifier(spec: ClassifierSpec, X, y) -> ClassifierModel:
    X = check_matrix(X)
    y = _validate_labels(y)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    std = Standardizer.fit(X)
    Xs = std.apply(X)
    n, d = Xs.shape

    counts = np.bincount(y, minlength=2)
    majority = int(np.argmax(counts))  # argmax tie -> class 0
    if counts[0] == 0 or counts[1] == 0:
        return ClassifierModel(spec, std, d, majority, constant=int(y[0]), state=None)

    if spec.kind == "parzen":
        state = _fit_parzen(Xs, y)
    elif spec.kind == "dtree":
        state = build_tree(np.ascontiguousarray(Xs), y, d, mix_seed(spec.seed, 0xD7EE))
    elif spec.kind == "knn":
        state = (Xs.copy(), y.copy())
    elif spec.kind == "gnb":
        state = _fit_gnb(Xs, y)
    elif spec.kind == "rforest":
        state = _fit_forest(Xs, y, spec)
    else:  # pragma: no cover - guarded by the spec validator
        raise ValueError(spec.kind)
    return ClassifierModel(spec, std, d, majority, constant=None, state=state)


def predict_classifier(model: ClassifierModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"probe matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if model.constant is not None:
        return np.full(X.shape[0], model.constant, dtype=np.int64)
    Xs = model.standardizer.apply(X)

    kind = model.spec.kind
    if kind == "parzen":
        return _predict_parzen(model, Xs)
    if kind == "dtree":
        return predict_tree(*model.state, np.ascontiguousarray(Xs))
    if kind == "knn":
        return _predict_knn(model, Xs)
    if kind == "gnb":
        return _predict_gnb(model, Xs)
    if kind == "rforest":
        return _predict_forest(model, Xs)
    raise ValueError(kind)  # pragma: no cover


# ---------------------------------------------------------------------------
# Parzen window: per-class Gaussian kernel density with Silverman bandwidth
# ---------------------------------------------------------------------------

def _silverman_bandwidth(n: int, d: int) -> float:
    # Features are standardized, so the per-dimension spread is 1.
    return (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


def _fit_parzen(Xs, y):
    state = {}
    n = Xs.shape[0]
    for cls in (0, 1):
        pts = Xs[y == cls]
        state[cls] = (pts, _silverman_bandwidth(len(pts), Xs.shape[1]), np.log(len(pts) / n))
    return state


def _log_density(Xq, pts, h, d):
    d2 = ((Xq[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    expo = -0.5 * d2 / (h * h)
    m = expo.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    lse = safe + np.log(np.exp(expo - safe[:, None]).sum(axis=1))
    return lse - np.log(len(pts)) - d * np.log(h) - 0.5 * d * np.log(2 * np.pi)


def _predict_parzen(model, Xs):
    d = Xs.shape[1]
    scores = np.empty((Xs.shape[0], 2))
    for cls in (0, 1):
        pts, h, log_prior = model.state[cls]
        scores[:, cls] = _log_density(Xs, pts, h, d) + log_prior
    out = np.argmax(scores, axis=1).astype(np.int64)
    # Densities that underflow everywhere carry no information:
    # fall back to the majority class.
    dead = ~np.isfinite(scores).any(axis=1)
    out[dead] = model.majority_class
    return out


# ---------------------------------------------------------------------------
# K-nearest neighbors (majority vote, ties -> class 0)
# ---------------------------------------------------------------------------

def _predict_knn(model, Xs):
    pts, labels = model.state
    k = min(model.spec.k, len(labels))
    d2 = ((Xs[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = labels[nearest].sum(axis=1)
    return (2 * votes > k).astype(np.int64)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes (variance floor, empirical priors)
# ---------------------------------------------------------------------------

def _fit_gnb(Xs, y):
    state = {}
    n = Xs.shape[0]
    for cls in (0, 1):
        pts = Xs[y == cls]
        var = np.maximum(pts.var(axis=0), _GNB_VAR_FLOOR)
        state[cls] = (pts.mean(axis=0), var, np.log(len(pts) / n))
    return state


def _predict_gnb(model, Xs):
    scores = np.empty((Xs.shape[0], 2))
    for cls in (0, 1):
        mu, var, log_prior = model.state[cls]
        ll = -0.5 * (((Xs - mu) ** 2) / var + np.log(2 * np.pi * var)).sum(axis=1)
        scores[:, cls] = ll + log_prior
    out = np.argmax(scores, axis=1).astype(np.int64)
    dead = ~np.isfinite(scores).any(axis=1)
    out[dead] = model.majority_class
    return out


# ---------------------------------------------------------------------------
# Random forest: bootstrap + sqrt(d) features per split, majority vote
# ---------------------------------------------------------------------------

def _fit_forest(Xs, y, spec: ClassifierSpec):
    Xc = np.ascontiguousarray(Xs)
    d = Xc.shape[1]
    mtry = max(1, int(round(np.sqrt(d))))
    trees = []
    for t in range(spec.n_trees):
        boot = bootstrap_indices(Xc.shape[0], mix_seed(spec.seed, t, 0xB007))
        trees.append(build_tree(Xc[boot], y[boot], mtry, mix_seed(spec.seed, t, 0x7EEE)))
    return trees

def _predict_forest(model, Xs):
    Xc = np.ascontiguousarray(Xs)
    votes = np.zeros(Xc.shape[0], dtype=np.int64)
    for tree in model.state:
        votes += predict_tree(*tree, Xc)
    n_trees = len(model.state)
    return (2 * votes > n_trees).astype(np.int64)  # tie -> class 0
