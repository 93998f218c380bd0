"""PCA fitting/projection, benchmark-driven dimension selection, and fusion.

The dimension selector turns a (trait x candidate-dimension) score
matrix into a single dimension: each trait row is normalized by its own
best score, the normalized scores are summed per dimension, and the
dimension with the largest sum wins. Classification uses accuracies
(higher is better); regression uses fitting errors, where the
normalization is inverted (best/score) so that larger still means
better. Ties go to the smallest dimension.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

_DEGENERATE_EIGENVALUE = 1e-12


@dataclass(frozen=True)
class PCAModel:
    """Orthonormal principal directions with non-increasing eigenvalues."""

    mean: np.ndarray
    components: np.ndarray   # (k, d), rows orthonormal
    eigenvalues: np.ndarray  # (k,), non-negative, non-increasing
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    def truncated(self, k: int) -> "PCAModel":
        """The same model restricted to its leading k components."""
        k = min(k, self.n_components)
        return PCAModel(
            mean=self.mean,
            components=self.components[:k],
            eigenvalues=self.eigenvalues[:k],
            total_variance=self.total_variance,
        )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each component so its largest-magnitude coordinate is positive."""
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _complete_basis(components: np.ndarray, needed: int, d: int) -> np.ndarray:
    """Deterministically extend a partial orthonormal basis.

    Only reached when the fitting data has lower rank than the requested
    component count; the completion scans standard basis vectors.
    """
    rows = [c for c in components]
    for j in range(d):
        if len(rows) >= needed:
            break
        v = np.zeros(d)
        v[j] = 1.0
        for r in rows:
            v -= (v @ r) * r
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            rows.append(v / norm)
    return np.array(rows[:needed])


def pca_fit(X: np.ndarray, k: int) -> PCAModel:
    """Fit up to min(k, n-1, d) principal components of the sample covariance."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 samples, got {n}")
    if k < 1:
        raise ValueError(f"target dimension must be at least 1, got {k}")

    mean = X.mean(axis=0)
    Xc = X - mean
    k_eff = min(k, n - 1, d)
    total_variance = float((Xc**2).sum() / (n - 1))

    if d <= n:
        cov = (Xc.T @ Xc) / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:k_eff]
        eigenvalues = evals[order]
        components = evecs[:, order].T
    else:
        # Gram-matrix route keeps the eigenproblem n x n for wide data.
        gram = (Xc @ Xc.T) / (n - 1)
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:k_eff]
        eigenvalues = evals[order]
        raw = Xc.T @ evecs[:, order]
        norms = np.linalg.norm(raw, axis=0)
        good = norms > _DEGENERATE_EIGENVALUE
        components = np.zeros((k_eff, d))
        components[good] = (raw[:, good] / norms[good]).T
        if not np.all(good):
            components = _complete_basis(components[good], k_eff, d)

    eigenvalues = np.clip(eigenvalues, 0.0, None)
    components = _fix_signs(np.ascontiguousarray(components))
    return PCAModel(mean=mean, components=components, eigenvalues=eigenvalues, total_variance=total_variance)


def pca_transform(model: PCAModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise DimensionMismatchError(f"model expects {model.input_dim} columns, got {X.shape[1]}")
    out = (X - model.mean) @ model.components.T
    return out[0] if single else out


def pca_reconstruct(model: PCAModel, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != model.n_components:
        raise DimensionMismatchError(f"model has {model.n_components} components, got {Z.shape[-1]}")
    return Z @ model.components + model.mean


@dataclass(frozen=True)
class AccuracyMatrix:
    """Per-trait scores at each candidate dimension (accuracy or error)."""

    traits: tuple[str, ...]
    dims: tuple[int, ...]
    values: np.ndarray  # (traits, dims)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.traits), len(self.dims)):
            raise ValueError(f"values shape {vals.shape} does not match ({len(self.traits)}, {len(self.dims)})")
        if not np.all(np.isfinite(vals)):
            raise ValueError("all matrix entries must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "traits", tuple(self.traits))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("trait," + ",".join(str(d) for d in self.dims) + "\n")
        for trait, row in zip(self.traits, self.values):
            buf.write(trait + "," + ",".join(repr(v) for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "AccuracyMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        dims = tuple(int(tok) for tok in lines[0].split(",")[1:])
        traits, rows = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            traits.append(parts[0])
            rows.append([float(tok) for tok in parts[1:]])
        return AccuracyMatrix(traits=tuple(traits), dims=dims, values=np.array(rows))


def select_dimension(acc: AccuracyMatrix, mode: str = "maximize") -> int:
    """Pick the candidate dimension with the best row-normalized score sum.

    ``maximize`` treats entries as accuracies; ``minimize`` treats them
    as errors (all entries must then be positive). Ties resolve to the
    smallest dimension.
    """
    values = acc.values
    if values.size == 0:
        raise ValueError("empty accuracy matrix")
    if mode == "maximize":
        best = values.max(axis=1)
        if np.any(best == 0):
            bad = [acc.traits[i] for i in np.flatnonzero(best == 0)]
            raise ValueError(f"degenerate trait rows with all-zero scores: {bad}")
        normalized = values / best[:, None]
    elif mode == "minimize":
        if np.any(values <= 0):
            raise ValueError("minimize mode requires strictly positive entries")
        best = values.min(axis=1)
        normalized = best[:, None] / values
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sums = normalized.sum(axis=0)
    # argmax returns the first maximum; dims are listed ascending by
    # convention, but sort defensively so ties go to the smallest dim.
    order = np.argsort(acc.dims, kind="stable")
    winner = order[int(np.argmax(sums[order]))]
    return acc.dims[winner]


@dataclass(frozen=True)
class FusionReducer:
    """Fitted two-stage reducer: per-block PCA, concatenation, joint PCA."""

    pca_a: PCAModel
    pca_b: PCAModel
    pca_out: PCAModel

    def transform(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        za = pca_transform(self.pca_a, A)
        zb = pca_transform(self.pca_b, B)
        return pca_transform(self.pca_out, np.hstack([za, zb]))


def fuse_features(A: np.ndarray, B: np.ndarray, k_each: int = 400, k_out: int = 50) -> tuple[np.ndarray, FusionReducer]:
    """Reduce each block to k_each dims, concatenate, reduce again to k_out."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    pca_a = pca_fit(A, k_each)
    pca_b = pca_fit(B, k_each)
    za = pca_transform(pca_a, A)
    zb = pca_transform(pca_b, B)
    concat = np.hstack([za, zb])
    pca_out = pca_fit(concat, k_out)
    fused = pca_transform(pca_out, concat)
    return fused, FusionReducer(pca_a=pca_a, pca_b=pca_b, pca_out=pca_out)
