"""The six regression methods behind uniform fit/predict calls.

Conventions shared by all linear methods: features are standardized
with training statistics (population std), the target is centered, and
the intercept is the training target mean (never penalized).

Solvers:
  ols    least squares via a rank-revealing solve
  ridge  closed form (X'X + lambda I)^-1 X'y on standardized features
  lasso  cyclic coordinate descent with soft thresholding on the
         objective (1/2n)||y - Xb||^2 + lambda ||b||_1
  pinv   minimum-norm least squares via the singular-value pseudo-inverse
  knn    mean target of the k nearest training points
  svr    epsilon-insensitive RBF-kernel dual solved by SMO

Ridge/lasso lambda and the SVR (C, epsilon, gamma) triple default to an
inner 5-fold grid search on the training data when left unset.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, DimensionMismatchError
from ._smo import solve_svr
from ._util import Standardizer, check_matrix, mix_seed

REGRESSOR_KINDS = ("ols", "ridge", "lasso", "pinv", "knn", "svr")

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 100_000
SVR_KKT_TOL = 1e-3

LAMBDA_GRID = tuple(10.0**e for e in range(-4, 3))
SVR_C_GRID = tuple(10.0**e for e in range(-1, 4))
SVR_EPSILON_GRID = (0.01, 0.1, 0.5)
SVR_GAMMA_GRID = (0.01, 0.1, 1.0)  # divided by the feature count


@dataclass(frozen=True)
class RegressorSpec:
    kind: str
    alpha: float | None = None      # ridge/lasso penalty
    C: float | None = None          # svr box constraint
    epsilon: float | None = None    # svr tube half-width
    gamma: float | None = None      # svr RBF width
    k: int = 5                      # knn neighbor count
    seed: int = 0

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        for name in ("C", "epsilon", "gamma"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")

    def with_seed(self, seed: int) -> "RegressorSpec":
        return RegressorSpec(kind=self.kind, alpha=self.alpha, C=self.C, epsilon=self.epsilon,
                             gamma=self.gamma, k=self.k, seed=seed)


@dataclass(frozen=True)
class RegressorModel:
    spec: RegressorSpec
    standardizer: Standardizer
    n_features: int
    y_mean: float
    state: object


def fit_regressor(spec: RegressorSpec, X, y) -> RegressorModel:
    X = check_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"targets must be 1-D with {X.shape[0]} entries, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {X.shape[0]}")

    std = Standardizer.fit(X)
    Xs = std.apply(X)
    y_mean = float(y.mean())
    yc = y - y_mean

    if spec.kind == "ols":
        state = _fit_ols(Xs, yc)
    elif spec.kind == "ridge":
        alpha = spec.alpha if spec.alpha is not None else _search_lambda(spec, Xs, yc, "ridge")
        state = (alpha, _fit_ridge(Xs, yc, alpha))
    elif spec.kind == "lasso":
        alpha = spec.alpha if spec.alpha is not None else _search_lambda(spec, Xs, yc, "lasso")
        state = (alpha, _fit_lasso(Xs, yc, alpha))
    elif spec.kind == "pinv":
        state = _fit_pinv(Xs, yc)
    elif spec.kind == "knn":
        state = (Xs.copy(), yc.copy())
    elif spec.kind == "svr":
        state = _fit_svr(spec, Xs, yc)
    else:  # pragma: no cover - guarded by the spec validator
        raise ValueError(spec.kind)
    return RegressorModel(spec, std, X.shape[1], y_mean, state)


def predict_regressor(model: RegressorModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"probe matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(f"model expects {model.n_features} features, got {X.shape[1]}")
    Xs = model.standardizer.apply(X)

    kind = model.spec.kind
    if kind in ("ols", "pinv"):
        return Xs @ model.state + model.y_mean
    if kind in ("ridge", "lasso"):
        _, coef = model.state
        return Xs @ coef + model.y_mean
    if kind == "knn":
        pts, yc = model.state
        k = min(model.spec.k, len(yc))
        d2 = ((Xs[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return yc[nearest].mean(axis=1) + model.y_mean
    if kind == "svr":
        pts, beta, bias, gamma = model.state
        K = _rbf_kernel(Xs, pts, gamma)
        return K @ beta + bias + model.y_mean
    raise ValueError(kind)  # pragma: no cover


def coefficients(model: RegressorModel) -> np.ndarray:
    """Linear coefficients in original feature units (linear kinds only)."""
    kind = model.spec.kind
    if kind in ("ols", "pinv"):
        coef = model.state
    elif kind in ("ridge", "lasso"):
        coef = model.state[1]
    else:
        raise ValueError(f"{kind} has no linear coefficient vector")
    return coef / model.standardizer.scale


def intercept(model: RegressorModel) -> float:
    kind = model.spec.kind
    coef = coefficients(model)
    return model.y_mean - float(model.standardizer.mean @ coef)


# ---------------------------------------------------------------------------
# Linear solvers
# ---------------------------------------------------------------------------

def _fit_ols(Xs, yc):
    coef, *_ = np.linalg.lstsq(Xs, yc, rcond=None)
    return coef


def _fit_ridge(Xs, yc, alpha):
    d = Xs.shape[1]
    gram = Xs.T @ Xs + alpha * np.eye(d)
    try:
        return np.linalg.solve(gram, Xs.T @ yc)
    except np.linalg.LinAlgError:
        coef, *_ = np.linalg.lstsq(gram, Xs.T @ yc, rcond=None)
        return coef


def _fit_lasso(Xs, yc, alpha):
    n, d = Xs.shape
    col_sq = (Xs**2).sum(axis=0) / n
    coef = np.zeros(d)
    residual = yc.copy()
    for sweep in range(LASSO_MAX_SWEEPS):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            rho = (Xs[:, j] @ residual) / n + col_sq[j] * coef[j]
            new = np.sign(rho) * max(abs(rho) - alpha, 0.0) / col_sq[j]
            delta = new - coef[j]
            if delta != 0.0:
                residual -= Xs[:, j] * delta
                coef[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < LASSO_TOL:
            return coef
    raise ConvergenceError(
        f"lasso failed to converge in {LASSO_MAX_SWEEPS} sweeps (last max coefficient change {max_delta:.3e})"
    )


def _fit_pinv(Xs, yc):
    u, s, vt = np.linalg.svd(Xs, full_matrices=False)
    if s.size:
        cutoff = s[0] * max(Xs.shape) * np.finfo(float).eps
        inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    else:
        inv = s
    return vt.T @ (inv * (u.T @ yc))


# ---------------------------------------------------------------------------
# Kernel regression
# ---------------------------------------------------------------------------

def _rbf_kernel(A, B, gamma):
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * d2)


def _fit_svr(spec: RegressorSpec, Xs, yc):
    d = Xs.shape[1]
    if spec.C is not None and spec.epsilon is not None and spec.gamma is not None:
        C, epsilon, gamma = spec.C, spec.epsilon, spec.gamma
    else:
        C, epsilon, gamma = _search_svr(spec, Xs, yc)
        if spec.C is not None:
            C = spec.C
        if spec.epsilon is not None:
            epsilon = spec.epsilon
        if spec.gamma is not None:
            gamma = spec.gamma
    K = _rbf_kernel(Xs, Xs, gamma)
    result = solve_svr(K, yc, C=C, epsilon=epsilon, tol=SVR_KKT_TOL)
    return (Xs.copy(), result.beta, result.bias, gamma)


# ---------------------------------------------------------------------------
# Inner grid search for unset hyperparameters
# ---------------------------------------------------------------------------

def _inner_folds(n: int, seed: int, folds: int = 5):
    folds = max(2, min(folds, n))
    order = np.random.default_rng(mix_seed(seed, 0x6171D)).permutation(n)
    return np.array_split(order, folds)

def _cv_rmse(fit, predict, Xs, yc, seed) -> float:
    errors = []
    for test_idx in _inner_folds(Xs.shape[0], seed):
        train = np.setdiff1d(np.arange(Xs.shape[0]), test_idx)
        if len(train) < 2 or len(test_idx) == 0:
            continue
        state = fit(Xs[train], yc[train])
        pred = predict(state, Xs[train], yc[train], Xs[test_idx])
        errors.append(np.mean((pred - yc[test_idx]) ** 2))
    return float(np.sqrt(np.mean(errors))) if errors else np.inf


def _search_lambda(spec, Xs, yc, kind: str) -> float:
    solver = _fit_ridge if kind == "ridge" else _fit_lasso

    def fit(Xtr, ytr):
        return None

    best_alpha, best_err = LAMBDA_GRID[0], np.inf
    for alpha in LAMBDA_GRID:
        def predict(_state, Xtr, ytr, Xte, alpha=alpha):
            return Xte @ solver(Xtr, ytr, alpha)

        err = _cv_rmse(fit, predict, Xs, yc, spec.seed)
        if err < best_err:
            best_alpha, best_err = alpha, err
    return best_alpha


def _search_svr(spec, Xs, yc):
    d = Xs.shape[1]
    grid = list(itertools.product(SVR_C_GRID, SVR_EPSILON_GRID, [g / d for g in SVR_GAMMA_GRID]))
    best, best_err = grid[0], np.inf

    def fit(Xtr, ytr):
        return None

    for C, epsilon, gamma in grid:
        def predict(_state, Xtr, ytr, Xte, C=C, epsilon=epsilon, gamma=gamma):
            K = _rbf_kernel(Xtr, Xtr, gamma)
            res = solve_svr(K, ytr, C=C, epsilon=epsilon, tol=SVR_KKT_TOL)
            return _rbf_kernel(Xte, Xtr, gamma) @ res.beta + res.bias

        err = _cv_rmse(fit, predict, Xs, yc, spec.seed)
        if err < best_err:
            best, best_err = (C, epsilon, gamma), err
    return best
