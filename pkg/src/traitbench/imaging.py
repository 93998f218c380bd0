"""Image-space preprocessing for the appearance feature.

Images are plain ``uint8`` arrays of shape (height, width); point
coordinates are (x, y) with x along columns and y along rows, growing
downward. The pipeline stages are: similarity alignment that pins the
pupils to fixed horizontal positions, the square face crop constructed
from the pupil segment, optional mask application, a piecewise-affine
warp that moves the landmarks onto the dataset mean shape, and a
fixed-ratio image pyramid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import Delaunay, QhullError

from .errors import DataError, DegenerateInputError
from .geometry import SimilarityTransform, similarity_to_targets

# Mid-gray fill avoids injecting artificial gradient energy at crop and
# mask borders.
DEFAULT_FILL = 128


@dataclass(frozen=True)
class ImagingConfig:
    """Knobs of the preprocessing stages."""

    pupil_distance: float = 100.0   # pixels between aligned pupils
    pupil_row_frac: float = 0.4     # aligned pupil row as a fraction of height
    crop_size: int = 200            # output resolution of the face crop
    fill_value: int = DEFAULT_FILL
    pyramid_levels: int = 4
    pyramid_factor: float = 1.5
    pyramid_min_dim: int = 32

    def pupil_targets(self, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
        cx = width / 2.0
        cy = height * self.pupil_row_frac
        half = self.pupil_distance / 2.0
        return np.array([cx - half, cy]), np.array([cx + half, cy])


@dataclass(frozen=True)
class CropRect:
    """Axis-aligned square in source-image pixel coordinates."""

    x0: float
    y0: float
    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError(f"crop side must be positive, got {self.side}")

    def map_to_output(self, points: np.ndarray, out_size: int) -> np.ndarray:
        """Source-image coordinates -> crop-output pixel coordinates."""
        pts = np.asarray(points, dtype=float)
        scale = out_size / self.side
        return (pts - np.array([self.x0, self.y0])) * scale - 0.5 + 0.5 * scale


@dataclass(frozen=True)
class Pyramid:
    levels: tuple[np.ndarray, ...]

    def sizes(self) -> list[tuple[int, int]]:
        return [lvl.shape for lvl in self.levels]


def _as_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    return arr


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    """Sample ``img`` at float coordinates; outside positions get ``fill``."""
    h, w = img.shape
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    f = img.astype(float)
    top = f[y0, x0] * (1 - fx) + f[y0, x1] * fx
    bot = f[y1, x0] * (1 - fx) + f[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, float(fill))


def _resample_inverse(img: np.ndarray, inverse: SimilarityTransform, out_shape: tuple[int, int], fill: int) -> np.ndarray:
    """Output pixel (x, y) takes the bilinear sample at inverse(x, y)."""
    oh, ow = out_shape
    xs, ys = np.meshgrid(np.arange(ow, dtype=float), np.arange(oh, dtype=float))
    grid = np.column_stack([xs.ravel(), ys.ravel()])
    src = inverse.apply(grid)
    vals = bilinear_sample(img, src[:, 0], src[:, 1], fill)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8).reshape(out_shape)


def align_image(img: np.ndarray, pupils, config: ImagingConfig = ImagingConfig()) -> tuple[np.ndarray, SimilarityTransform]:
    """Similarity-align so the pupils sit horizontally at the configured targets."""
    img = _as_image(img)
    left, right = (np.asarray(p, dtype=float) for p in pupils)
    if np.allclose(left, right):
        raise DegenerateInputError("pupils are coincident")
    h, w = img.shape
    tgt_left, tgt_right = config.pupil_targets(w, h)
    transform = similarity_to_targets(left, right, tgt_left, tgt_right)
    aligned = _resample_inverse(img, transform.invert(), (h, w), config.fill_value)
    return aligned, transform


def crop_face(img: np.ndarray, pupils, config: ImagingConfig = ImagingConfig()) -> tuple[np.ndarray, CropRect]:
    """Square crop below the pupil segment.

    With the pupil segment AB of length d and midpoint M, the square is
    centered at C = M + (0, d/2) (y grows downward) with side 2d, then
    resampled to ``config.crop_size`` square.
    """
    img = _as_image(img)
    a, b = (np.asarray(p, dtype=float) for p in pupils)
    if np.allclose(a, b):
        raise DegenerateInputError("pupils are coincident")
    d = float(np.hypot(*(b - a)))
    mx, my = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    cx, cy = mx, my + d / 2.0
    rect = CropRect(x0=cx - d, y0=cy - d, side=2.0 * d)

    size = config.crop_size
    step = rect.side / size
    centers = rect.x0 + (np.arange(size) + 0.5) * step - 0.5
    centers_y = rect.y0 + (np.arange(size) + 0.5) * step - 0.5
    xs, ys = np.meshgrid(centers, centers_y)
    vals = bilinear_sample(img, xs.ravel(), ys.ravel(), config.fill_value)
    out = np.clip(np.rint(vals), 0, 255).astype(np.uint8).reshape(size, size)
    return out, rect


def apply_mask(img: np.ndarray, mask: np.ndarray, fill: int = DEFAULT_FILL) -> np.ndarray:
    """Copy foreground pixels (mask > 127); set background to ``fill``."""
    img = _as_image(img)
    mask = _as_image(mask)
    if mask.shape != img.shape:
        raise DataError(f"mask shape {mask.shape} does not match image shape {img.shape}")
    return np.where(mask > 127, img, np.uint8(fill)).astype(np.uint8)


# Border anchors (corner + edge-midpoint fractions) pin the warp at the
# image boundary so the triangulation covers the whole frame.
_BORDER_FRACS = np.array([
    [0.0, 0.0], [0.5, 0.0], [1.0, 0.0],
    [0.0, 0.5], [1.0, 0.5],
    [0.0, 1.0], [0.5, 1.0], [1.0, 1.0],
])


def warp_to_mean(img: np.ndarray, landmarks: np.ndarray, mean_points: np.ndarray, fill: int = DEFAULT_FILL) -> np.ndarray:
    """Piecewise-affine warp moving each landmark onto its mean position.

    Landmarks and mean positions are both in the coordinates of ``img``.
    The triangulation is built over the mean positions plus 8 fixed
    border anchors; each destination triangle maps affinely back to its
    source counterpart.
    """
    img = _as_image(img)
    src_pts = np.asarray(landmarks, dtype=float)
    dst_pts = np.asarray(mean_points, dtype=float)
    if src_pts.shape != dst_pts.shape:
        raise DataError("landmarks and mean positions must have the same shape")

    centered = src_pts - src_pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
        raise DegenerateInputError("landmarks are collinear; warp is degenerate")

    h, w = img.shape
    anchors = _BORDER_FRACS * np.array([w - 1, h - 1])
    src = np.vstack([src_pts, anchors])
    dst = np.vstack([dst_pts, anchors])
    try:
        tri = Delaunay(dst)
    except QhullError as exc:
        raise DegenerateInputError(f"degenerate triangulation: {exc}") from exc

    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    grid = np.column_stack([xs.ravel(), ys.ravel()])
    simplex = tri.find_simplex(grid)

    # Barycentric coordinates in the destination triangle carry over to
    # the source triangle, giving the inverse map per pixel.
    sane = simplex >= 0
    src_coords = np.full_like(grid, -1.0)
    if np.any(sane):
        T = tri.transform[simplex[sane]]
        delta = grid[sane] - T[:, 2]
        bary2 = np.einsum("nij,nj->ni", T[:, :2], delta)
        bary = np.column_stack([bary2, 1.0 - bary2.sum(axis=1)])
        verts = tri.simplices[simplex[sane]]
        src_coords[sane] = np.einsum("nk,nkd->nd", bary, src[verts])

    vals = bilinear_sample(img, src_coords[:, 0], src_coords[:, 1], fill)
    vals[~sane] = float(fill)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8).reshape(h, w)


def _lowpass(img: np.ndarray, sigma: float) -> np.ndarray:
    return gaussian_filter(img.astype(float), sigma=sigma, mode="nearest")


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(img, gx.ravel(), gy.ravel(), 0).reshape(out_h, out_w)


def pyramid_sizes(h: int, w: int, levels: int, factor: float = 1.5, min_dim: int = 32) -> list[tuple[int, int]]:
    """Level sizes: floor(previous / factor), stopping once a built level
    drops below ``min_dim`` in either dimension."""
    sizes = [(h, w)]
    for _ in range(1, levels):
        ph, pw = sizes[-1]
        if min(ph, pw) < min_dim:
            break
        sizes.append((int(ph // factor), int(pw // factor)))
    return sizes


def build_pyramid(img: np.ndarray, levels: int, config: ImagingConfig = ImagingConfig()) -> Pyramid:
    """Downsampling chain at the configured factor with light low-pass."""
    img = _as_image(img)
    if levels < 1:
        raise ValueError(f"levels must be at least 1, got {levels}")
    sizes = pyramid_sizes(img.shape[0], img.shape[1], levels, config.pyramid_factor, config.pyramid_min_dim)
    out = [img]
    current = img.astype(float)
    for nh, nw in sizes[1:]:
        smoothed = _lowpass(current, sigma=0.8)
        current = _resize_bilinear(smoothed, nh, nw)
        out.append(np.clip(np.rint(current), 0, 255).astype(np.uint8))
    return Pyramid(levels=tuple(out))
