"""Landmark normalization and the geometric feature vectors.

A face is represented by 21 salient points. Normalization pins the two
pupils to fixed horizontal positions with a similarity transform
(rotation + uniform scale + translation, never a reflection), after
which the structural feature is built from three blocks:

  block 1 (42)  per-point polar differences to the dataset mean shape
  block 2 (882) polar relations between every point and every mean point
  block 3 (210) all pairwise point-to-point Euclidean distances

The fingerprint feature packs 16 minutiae, canonically ordered, into a
48-value vector of (x, y, theta) triples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateInputError

NUM_LANDMARKS = 21
# Canonical pupil targets: inter-pupil distance 100, midpoint at the
# origin, so block radii read as percent of inter-pupil distance.
PUPIL_TARGET_LEFT = (-50.0, 0.0)
PUPIL_TARGET_RIGHT = (50.0, 0.0)

STRUCTURAL_DIM = 2 * NUM_LANDMARKS + 2 * NUM_LANDMARKS**2 + (NUM_LANDMARKS * (NUM_LANDMARKS - 1)) // 2

NUM_MINUTIAE = 16
FINGERPRINT_DIM = 3 * NUM_MINUTIAE


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * R(rotation) @ p + translation."""

    rotation: float
    scale: float
    translation: tuple[float, float]

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + np.asarray(self.translation)

    def invert(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        return SimilarityTransform(
            rotation=-self.rotation,
            scale=inv_scale,
            translation=(
                -inv_scale * (c * tx - s * ty),
                -inv_scale * (s * tx + c * ty),
            ),
        )

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equal to applying ``inner`` first, then ``self``."""
        t = self.apply(np.asarray(inner.translation))
        return SimilarityTransform(
            rotation=self.rotation + inner.rotation,
            scale=self.scale * inner.scale,
            translation=(float(t[0]), float(t[1])),
        )

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(rotation=0.0, scale=1.0, translation=(0.0, 0.0))


@dataclass(frozen=True)
class LandmarkSet:
    """21 ordered (x, y) points plus the indices of the two pupils."""

    points: np.ndarray
    pupil_indices: tuple[int, int] = (0, 1)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise DataError(f"expected {NUM_LANDMARKS} points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("landmark coordinates must be finite")
        li, ri = self.pupil_indices
        if li == ri or not (0 <= li < NUM_LANDMARKS and 0 <= ri < NUM_LANDMARKS):
            raise DataError(f"pupil indices must be distinct and in range, got {self.pupil_indices}")
        if np.allclose(pts[li], pts[ri]):
            raise DegenerateInputError("pupils are coincident")
        object.__setattr__(self, "points", pts)

    @property
    def pupils(self) -> tuple[np.ndarray, np.ndarray]:
        li, ri = self.pupil_indices
        return self.points[li], self.points[ri]


@dataclass(frozen=True)
class MeanShape:
    """Coordinate-wise mean of normalized landmark sets."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise DataError(f"mean shape needs {NUM_LANDMARKS} points, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class MinutiaSet:
    """Fingerprint minutiae as (x, y, theta) rows, optional detector confidence."""

    minutiae: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.minutiae, dtype=float)
        if m.ndim != 2 or m.shape[1] != 3:
            raise DataError(f"minutiae must be (k, 3), got shape {m.shape}")
        object.__setattr__(self, "minutiae", m)
        if self.confidence is not None:
            c = np.asarray(self.confidence, dtype=float)
            if c.shape != (m.shape[0],):
                raise DataError("confidence length must match minutia count")
            object.__setattr__(self, "confidence", c)


def similarity_to_targets(src_a, src_b, dst_a, dst_b) -> SimilarityTransform:
    """The unique rotation+scale+translation sending segment (a, b) onto (a', b')."""
    src_a = np.asarray(src_a, dtype=float)
    src_b = np.asarray(src_b, dtype=float)
    dst_a = np.asarray(dst_a, dtype=float)
    dst_b = np.asarray(dst_b, dtype=float)
    v = src_b - src_a
    w = dst_b - dst_a
    nv = math.hypot(*v)
    if nv == 0.0:
        raise DegenerateInputError("source points are coincident")
    rotation = math.atan2(w[1], w[0]) - math.atan2(v[1], v[0])
    scale = math.hypot(*w) / nv
    c, s = math.cos(rotation), math.sin(rotation)
    rot_src = scale * np.array([c * src_a[0] - s * src_a[1], s * src_a[0] + c * src_a[1]])
    translation = dst_a - rot_src
    return SimilarityTransform(rotation=rotation, scale=scale, translation=(float(translation[0]), float(translation[1])))


def normalize_landmarks(raw: LandmarkSet) -> tuple[LandmarkSet, SimilarityTransform]:
    """Pin the pupils to the canonical targets (-50, 0) and (+50, 0).

    The output is in canonical units; the returned transform maps raw
    coordinates into them.
    """
    left, right = raw.pupils
    transform = similarity_to_targets(left, right, PUPIL_TARGET_LEFT, PUPIL_TARGET_RIGHT)
    pts = transform.apply(raw.points)
    # The pupils land on the targets by construction; snap away the
    # trailing float rounding so downstream exact checks hold.
    li, ri = raw.pupil_indices
    pts[li] = PUPIL_TARGET_LEFT
    pts[ri] = PUPIL_TARGET_RIGHT
    return LandmarkSet(points=pts, pupil_indices=raw.pupil_indices), transform


def mean_shape(sets: list[LandmarkSet]) -> MeanShape:
    if not sets:
        raise ValueError("mean shape needs at least one landmark set")
    stacked = np.stack([s.points for s in sets])
    return MeanShape(points=stacked.mean(axis=0))


def _polar(deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Radius and angle of 2-D difference vectors.

    Angle convention: atan2 in (-pi, pi], with the zero-radius angle
    defined as 0.
    """
    radius = np.hypot(deltas[..., 0], deltas[..., 1])
    angle = np.arctan2(deltas[..., 1], deltas[..., 0])
    angle = np.where(angle == -np.pi, np.pi, angle)
    angle = np.where(radius == 0.0, 0.0, angle)
    return radius, angle


def structural_feature(s: LandmarkSet, m: MeanShape) -> np.ndarray:
    """1134-value structural vector; both arguments in canonical units."""
    p = s.points
    mp = m.points

    d1 = p - mp
    r1, a1 = _polar(d1)
    block1 = np.column_stack([r1, a1]).ravel()

    d2 = p[:, None, :] - mp[None, :, :]
    r2, a2 = _polar(d2)
    block2 = np.stack([r2, a2], axis=-1).reshape(-1)

    iu, ju = np.triu_indices(NUM_LANDMARKS, k=1)
    block3 = np.hypot(p[iu, 0] - p[ju, 0], p[iu, 1] - p[ju, 1])

    out = np.concatenate([block1, block2, block3])
    assert out.shape == (STRUCTURAL_DIM,)
    return out


def canonical_minutia_order(minutiae: np.ndarray) -> np.ndarray:
    """Indices sorting minutiae by (y, x, theta) ascending."""
    m = np.asarray(minutiae, dtype=float)
    return np.lexsort((m[:, 2], m[:, 0], m[:, 1]))


def fingerprint_feature(mset: MinutiaSet) -> np.ndarray:
    """48-value vector from 16 canonically ordered minutiae.

    With more than 16 minutiae, the 16 of highest detector confidence
    are kept when confidence is available, otherwise the first 16 in
    canonical (y, x, theta) order.
    """
    m = mset.minutiae
    count = m.shape[0]
    if count < NUM_MINUTIAE:
        raise DataError(f"need at least {NUM_MINUTIAE} minutiae, got {count}")
    if count > NUM_MINUTIAE:
        if mset.confidence is not None:
            canon = canonical_minutia_order(m)
            # Stable sort on descending confidence keeps canonical order
            # among equal-confidence minutiae.
            keep = canon[np.argsort(-mset.confidence[canon], kind="stable")[:NUM_MINUTIAE]]
            m = m[keep]
        else:
            m = m[canonical_minutia_order(m)][:NUM_MINUTIAE]
    return m[canonical_minutia_order(m)].ravel()
