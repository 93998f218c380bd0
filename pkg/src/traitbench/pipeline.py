"""Feature extraction pipelines and fold-wise dimensionality reduction.

``extract_features`` turns a loaded manifest into a FeatureBundle:
either a plain matrix (structural, fingerprint) or per-descriptor raw
matrices (appearance, fused). ``FeatureSpace`` then serves per-fold
design matrices at any candidate dimension, fitting every reduction
stage on training rows only (or once globally, reproducing the
all-data protocol when requested).

Per-fold PCA on wide descriptor matrices runs through precomputed
Gram matrices: every centered inner product between sample rows is a
function of the global X @ X.T, so a training-fold eigenbasis and the
projections of all rows cost O(n^2) per fold instead of O(n^2 * d).
Component signs then follow the sample-space eigenvectors, which is
deterministic for a fixed dataset (the feature-space sign convention
of ``reduce.pca_fit`` would require materializing the components).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import Manifest
from .descriptors import (
    APPEARANCE_BLOCK_DIM,
    DESCRIPTOR_KINDS,
    DescriptorParams,
    MskParams,
    compute_all_descriptors,
)
from .errors import ConfigError, DataError
from .geometry import fingerprint_feature, mean_shape, normalize_landmarks, structural_feature
from .imaging import ImagingConfig, align_image, apply_mask, build_pyramid, crop_face, warp_to_mean
from .reduce import pca_fit, pca_transform

MATRIX_FEATURES = ("structural", "fingerprint")
FEATURE_KINDS = ("structural", "appearance", "fingerprint", "fused")


@dataclass(frozen=True)
class FeatureBundle:
    feature: str
    sample_ids: tuple[str, ...]
    matrix: np.ndarray | None = None              # structural / fingerprint
    blocks: dict[str, np.ndarray] | None = None   # appearance raw descriptors
    structural: np.ndarray | None = None          # fused: the structural side

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    def save(self, path) -> None:
        payload = {"feature": np.array(self.feature), "sample_ids": np.array(self.sample_ids)}
        if self.matrix is not None:
            payload["matrix"] = self.matrix
        if self.structural is not None:
            payload["structural"] = self.structural
        if self.blocks is not None:
            for kind, block in self.blocks.items():
                payload[f"block_{kind}"] = block
        np.savez_compressed(path, **payload)

    @staticmethod
    def load(path) -> "FeatureBundle":
        with np.load(path, allow_pickle=False) as data:
            feature = str(data["feature"])
            ids = tuple(str(s) for s in data["sample_ids"])
            matrix = data["matrix"] if "matrix" in data else None
            structural = data["structural"] if "structural" in data else None
            blocks = {}
            for key in data.files:
                if key.startswith("block_"):
                    blocks[key[len("block_"):]] = data[key]
        return FeatureBundle(
            feature=feature,
            sample_ids=ids,
            matrix=matrix,
            blocks=blocks or None,
            structural=structural,
        )


def structural_matrix(manifest: Manifest) -> np.ndarray:
    """Normalized-landmark structural features; the mean shape comes from
    the full sample slice."""
    normalized = []
    for sample in manifest.samples:
        try:
            normalized.append(normalize_landmarks(sample.landmarks)[0])
        except Exception as exc:
            raise DataError(f"sample {sample.sample_id!r}: {exc}") from exc
    mean = mean_shape(normalized)
    return np.stack([structural_feature(s, mean) for s in normalized])


def fingerprint_matrix(manifest: Manifest) -> np.ndarray:
    rows = []
    for sample in manifest.samples:
        if sample.minutiae is None:
            raise DataError(f"sample {sample.sample_id!r} has no minutia file")
        try:
            rows.append(fingerprint_feature(sample.minutiae))
        except Exception as exc:
            raise DataError(f"sample {sample.sample_id!r}: {exc}") from exc
    return np.stack(rows)


def appearance_blocks(
    manifest: Manifest,
    preprocess: str = "cropped",
    imaging: ImagingConfig = ImagingConfig(),
    descriptor_params: DescriptorParams = DescriptorParams(),
    descriptors: tuple[str, ...] = DESCRIPTOR_KINDS,
) -> dict[str, np.ndarray]:
    """Raw per-descriptor matrices after the full image pipeline:
    (mask ->) align -> crop -> warp-to-mean-shape -> pyramid -> descriptors."""
    crops, crop_landmarks = [], []
    mask_cfg = replace(imaging, fill_value=0)
    for sample in manifest.samples:
        try:
            img = sample.load_image()
            lm = sample.landmarks
            left, right = lm.pupils
            aligned, tf = align_image(img, (left, right), imaging)
            aligned_lm = tf.apply(lm.points)
            pupils = (aligned_lm[lm.pupil_indices[0]], aligned_lm[lm.pupil_indices[1]])
            crop, rect = crop_face(aligned, pupils, imaging)
            if preprocess == "segmented":
                mask = sample.load_mask()
                aligned_mask, _ = align_image(mask, (left, right), mask_cfg)
                mask_crop, _ = crop_face(aligned_mask, pupils, mask_cfg)
                crop = apply_mask(crop, mask_crop, imaging.fill_value)
            crops.append(crop)
            crop_landmarks.append(rect.map_to_output(aligned_lm, imaging.crop_size))
        except Exception as exc:
            raise DataError(f"sample {sample.sample_id!r}: {exc}") from exc

    mean_points = np.stack(crop_landmarks).mean(axis=0)
    per_kind: dict[str, list[np.ndarray]] = {kind: [] for kind in descriptors}
    for sample, crop, lm in zip(manifest.samples, crops, crop_landmarks):
        try:
            warped = warp_to_mean(crop, lm, mean_points, imaging.fill_value)
            pyr = build_pyramid(warped, imaging.pyramid_levels, imaging)
            raw = compute_all_descriptors(pyr, descriptor_params)
        except Exception as exc:
            raise DataError(f"sample {sample.sample_id!r}: {exc}") from exc
        for kind in descriptors:
            per_kind[kind].append(raw[kind])
    return {kind: np.stack(rows) for kind, rows in per_kind.items()}


def extract_features(
    manifest: Manifest,
    feature: str,
    preprocess: str = "cropped",
    imaging: ImagingConfig = ImagingConfig(),
    descriptor_params: DescriptorParams = DescriptorParams(),
    descriptors: tuple[str, ...] = DESCRIPTOR_KINDS,
) -> FeatureBundle:
    ids = tuple(manifest.sample_ids)
    if feature == "structural":
        return FeatureBundle(feature=feature, sample_ids=ids, matrix=structural_matrix(manifest))
    if feature == "fingerprint":
        return FeatureBundle(feature=feature, sample_ids=ids, matrix=fingerprint_matrix(manifest))
    if feature == "appearance":
        blocks = appearance_blocks(manifest, preprocess, imaging, descriptor_params, descriptors)
        return FeatureBundle(feature=feature, sample_ids=ids, blocks=blocks)
    if feature == "fused":
        blocks = appearance_blocks(manifest, preprocess, imaging, descriptor_params, descriptors)
        return FeatureBundle(
            feature=feature, sample_ids=ids, blocks=blocks, structural=structural_matrix(manifest)
        )
    raise ConfigError(f"unknown feature kind {feature!r}")


# ---------------------------------------------------------------------------
# Gram-based per-fold PCA
# ---------------------------------------------------------------------------

class GramBlock:
    """Training-fold PCA projections derived from a precomputed Gram matrix."""

    def __init__(self, X: np.ndarray):
        self.n, self.d = X.shape
        self.gram = X @ X.T

    def fit(self, train: np.ndarray, k: int) -> "FittedGramBlock":
        return FittedGramBlock(self, train, k)


class FittedGramBlock:
    def __init__(self, block: GramBlock, train: np.ndarray, k: int):
        g_tt = block.gram[np.ix_(train, train)]
        col_mean = g_tt.mean(axis=1)
        all_mean = g_tt.mean()
        centered = g_tt - col_mean[:, None] - col_mean[None, :] + all_mean
        m = len(train)
        k_eff = min(k, m - 1, block.d)
        evals, evecs = np.linalg.eigh(centered)
        order = np.argsort(evals)[::-1][:k_eff]
        lam = np.clip(evals[order], 0.0, None)
        u = evecs[:, order]
        good = lam > max(1e-10 * (lam[0] if lam.size else 0.0), 1e-12)
        lam, u = lam[good], u[:, good]
        # Deterministic signs via the sample-space eigenvectors.
        idx = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[idx, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        self._basis = (u * signs[None, :]) / np.sqrt(lam)[None, :]
        self._train = train
        self._col_mean = col_mean
        self._all_mean = all_mean
        self._block = block
        self.n_components = self._basis.shape[1]
        self.eigenvalues = lam / (m - 1)

    def project(self, rows: np.ndarray) -> np.ndarray:
        g_rt = self._block.gram[np.ix_(rows, self._train)]
        row_mean = g_rt.mean(axis=1)
        centered = g_rt - row_mean[:, None] - self._col_mean[None, :] + self._all_mean
        return centered @ self._basis


# ---------------------------------------------------------------------------
# Fold-wise feature spaces
# ---------------------------------------------------------------------------

class FeatureSpace:
    """Serves (train, test) design matrices at any candidate dimension.

    ``fold(train, test)`` fits the whole reduction chain on the training
    rows at the maximum candidate dimension and projects both index
    sets once; design matrices at smaller dimensions are
    leading-component column slices of the same projections.
    """

    def __init__(self, bundle: FeatureBundle, max_dim: int, fusion_dim: int = 400):
        self.bundle = bundle
        self.max_dim = max_dim
        self.fusion_dim = fusion_dim
        if bundle.feature in MATRIX_FEATURES:
            self._blocks = {"feature": GramBlock(bundle.matrix)}
        elif bundle.feature == "appearance":
            self._blocks = {k: GramBlock(bundle.blocks[k]) for k in DESCRIPTOR_KINDS if k in bundle.blocks}
        elif bundle.feature == "fused":
            self._blocks = {k: GramBlock(bundle.blocks[k]) for k in DESCRIPTOR_KINDS if k in bundle.blocks}
            self._blocks["structural"] = GramBlock(bundle.structural)
        else:
            raise ConfigError(f"unknown feature kind {bundle.feature!r}")

    def fold(self, train: np.ndarray, test: np.ndarray) -> "FoldView":
        return FoldView(self, np.asarray(train), np.asarray(test))


class FoldView:
    """Max-dimension projections of one train/test split."""

    def __init__(self, space: FeatureSpace, train: np.ndarray, test: np.ndarray):
        bundle = space.bundle
        feature = bundle.feature
        if feature in MATRIX_FEATURES:
            fit = space._blocks["feature"].fit(train, space.max_dim)
            self._train = fit.project(train)
            self._test = fit.project(test)
            return

        kinds = [k for k in DESCRIPTOR_KINDS if k in space._blocks]
        fits = {k: space._blocks[k].fit(train, APPEARANCE_BLOCK_DIM) for k in kinds}
        assembled_train = np.hstack([fits[k].project(train) for k in kinds])
        assembled_test = np.hstack([fits[k].project(test) for k in kinds])

        if feature == "fused":
            structural_fit = space._blocks["structural"].fit(train, space.fusion_dim)
            appear_pca = pca_fit(assembled_train, space.fusion_dim)
            assembled_train = np.hstack([
                structural_fit.project(train),
                pca_transform(appear_pca, assembled_train),
            ])
            assembled_test = np.hstack([
                structural_fit.project(test),
                pca_transform(appear_pca, assembled_test),
            ])

        stage2 = pca_fit(assembled_train, space.max_dim)
        self._train = pca_transform(stage2, assembled_train)
        self._test = pca_transform(stage2, assembled_test)

    def at(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        k = min(dim, self._train.shape[1])
        return self._train[:, :k], self._test[:, :k]
