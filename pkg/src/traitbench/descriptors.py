"""The texture descriptor bank and the holistic appearance feature.

Five descriptors run over every pyramid level and are concatenated
level-major: ``hog`` (oriented-gradient block histograms), ``lbp``
(uniform local binary pattern cell histograms), ``gabor`` (mean filter
response magnitudes on a coarse grid), ``gist`` (filter response
energies on a finer grid), and ``msk`` (a multi-scale keypoint
descriptor: difference-of-Gaussians extrema, each summarized by a
128-value gradient-orientation histogram, the descriptors of the K
largest-scale keypoints concatenated into a fixed-length vector).

Every descriptor's output length is a closed-form function of the
level sizes and parameters, exposed through ``descriptor_length``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter, minimum_filter
from scipy.signal import fftconvolve

from .errors import DataError, DimensionMismatchError
from .imaging import Pyramid
from .reduce import PCAModel, pca_transform

logger = logging.getLogger(__name__)

DESCRIPTOR_KINDS = ("hog", "lbp", "gabor", "gist", "msk")

# Appearance blocks are reduced to this many dimensions each before
# concatenation (capped by the PCA rank bound of the training data).
APPEARANCE_BLOCK_DIM = 85


@dataclass(frozen=True)
class HogParams:
    cell_size: int = 8
    block_cells: int = 2
    bins: int = 9
    eps: float = 1e-6


@dataclass(frozen=True)
class LbpParams:
    # 8 neighbors at radius 1 (the 3x3 ring), >=-comparison, 59-bin
    # uniform coding.
    cell_size: int = 16


@dataclass(frozen=True)
class GaborParams:
    wavelengths: tuple[float, ...] = (4.0, 4.0 * math.sqrt(2.0), 8.0, 8.0 * math.sqrt(2.0))
    orientations: int = 8
    grid: int = 2
    sigma_ratio: float = 0.56
    aspect: float = 0.5

    @property
    def n_filters(self) -> int:
        return len(self.wavelengths) * self.orientations


@dataclass(frozen=True)
class GistParams:
    wavelengths: tuple[float, ...] = (4.0, 4.0 * math.sqrt(2.0), 8.0, 8.0 * math.sqrt(2.0))
    orientations: int = 8
    grid: int = 4
    sigma_ratio: float = 0.56
    aspect: float = 0.5

    @property
    def n_filters(self) -> int:
        return len(self.wavelengths) * self.orientations


@dataclass(frozen=True)
class MskParams:
    keypoints: int = 32
    base_sigma: float = 1.6
    scales_per_octave: int = 3
    num_blurs: int = 8
    contrast_threshold: float = 0.02  # on intensities scaled to [0, 1]
    descriptor_grid: int = 4
    descriptor_bins: int = 8

    @property
    def descriptor_dim(self) -> int:
        return self.descriptor_grid**2 * self.descriptor_bins  # 128


@dataclass(frozen=True)
class DescriptorParams:
    hog: HogParams = field(default_factory=HogParams)
    lbp: LbpParams = field(default_factory=LbpParams)
    gabor: GaborParams = field(default_factory=GaborParams)
    gist: GistParams = field(default_factory=GistParams)
    msk: MskParams = field(default_factory=MskParams)

    def for_kind(self, kind: str):
        if kind not in DESCRIPTOR_KINDS:
            raise ValueError(f"unknown descriptor kind {kind!r}")
        return getattr(self, kind)


# ---------------------------------------------------------------------------
# HOG
# ---------------------------------------------------------------------------

def hog_level(img: np.ndarray, p: HogParams = HogParams()) -> np.ndarray:
    h, w = img.shape
    ncy, ncx = h // p.cell_size, w // p.cell_size
    if ncy < p.block_cells or ncx < p.block_cells:
        raise DataError(f"hog: level {h}x{w} smaller than one {p.block_cells}x{p.block_cells}-cell block")

    f = img.astype(float) / 255.0
    gy, gx = np.gradient(f)
    mag = np.hypot(gx, gy)
    ori = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned orientation in [0, pi)

    hy, hx = ncy * p.cell_size, ncx * p.cell_size
    mag = mag[:hy, :hx]
    ori = ori[:hy, :hx]

    # Soft orientation binning with circular wrap between adjacent bins.
    bin_width = np.pi / p.bins
    z = ori / bin_width - 0.5
    lower = np.floor(z).astype(np.intp)
    frac = z - lower
    lo = np.mod(lower, p.bins)
    hi = np.mod(lower + 1, p.bins)

    cy = np.repeat(np.arange(ncy), p.cell_size)[:, None]
    cx = np.repeat(np.arange(ncx), p.cell_size)[None, :]
    cell_idx = (cy * ncx + cx) * p.bins

    hist = np.zeros(ncy * ncx * p.bins)
    np.add.at(hist, (cell_idx + lo).ravel(), (mag * (1 - frac)).ravel())
    np.add.at(hist, (cell_idx + hi).ravel(), (mag * frac).ravel())
    hist = hist.reshape(ncy, ncx, p.bins)

    b = p.block_cells
    blocks = np.concatenate(
        [hist[dy: ncy - b + 1 + dy, dx: ncx - b + 1 + dx] for dy in range(b) for dx in range(b)],
        axis=2,
    )
    norms = np.sqrt((blocks**2).sum(axis=2, keepdims=True) + p.eps**2)
    return (blocks / norms).ravel()


# ---------------------------------------------------------------------------
# LBP
# ---------------------------------------------------------------------------

def _uniform_lbp_map() -> np.ndarray:
    """code -> bin; the 58 uniform codes get their own bins, rest share bin 58."""
    mapping = np.full(256, 58, dtype=np.intp)
    nxt = 0
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            mapping[code] = nxt
            nxt += 1
    assert nxt == 58
    return mapping


_LBP_MAP = _uniform_lbp_map()
LBP_BINS = 59
# Neighbor offsets (dy, dx) starting east, counter-clockwise; bit i has
# weight 2**i.
_LBP_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def lbp_codes(img: np.ndarray) -> np.ndarray:
    """Per-pixel codes; neighbors >= center set their bit. Edges replicate."""
    padded = np.pad(img, 1, mode="edge").astype(np.int16)
    center = padded[1:-1, 1:-1]
    codes = np.zeros(img.shape, dtype=np.intp)
    for bit, (dy, dx) in enumerate(_LBP_OFFSETS):
        neighbor = padded[1 + dy: padded.shape[0] - 1 + dy, 1 + dx: padded.shape[1] - 1 + dx]
        codes |= (neighbor >= center).astype(np.intp) << bit
    return codes


def lbp_level(img: np.ndarray, p: LbpParams = LbpParams()) -> np.ndarray:
    h, w = img.shape
    ncy, ncx = h // p.cell_size, w // p.cell_size
    if ncy < 1 or ncx < 1:
        raise DataError(f"lbp: level {h}x{w} smaller than one {p.cell_size}px cell")
    mapped = _LBP_MAP[lbp_codes(img)]
    hy, hx = ncy * p.cell_size, ncx * p.cell_size
    mapped = mapped[:hy, :hx]

    cy = np.repeat(np.arange(ncy), p.cell_size)[:, None]
    cx = np.repeat(np.arange(ncx), p.cell_size)[None, :]
    flat = (cy * ncx + cx) * LBP_BINS + mapped
    hist = np.bincount(flat.ravel(), minlength=ncy * ncx * LBP_BINS).astype(float)
    hist = hist.reshape(ncy * ncx, LBP_BINS)
    hist /= hist.sum(axis=1, keepdims=True)  # cells are never empty
    return hist.ravel()


# ---------------------------------------------------------------------------
# Gabor / Gist (shared zero-mean filter bank)
# ---------------------------------------------------------------------------

def build_filter_bank(wavelengths, orientations: int, sigma_ratio: float, aspect: float) -> list[np.ndarray]:
    """Real Gabor kernels, zero-mean and L2-normalized, scale-major order."""
    bank = []
    for lam in wavelengths:
        sigma = sigma_ratio * lam
        radius = max(1, int(math.ceil(2.5 * sigma)))
        ys, xs = np.mgrid[-radius: radius + 1, -radius: radius + 1].astype(float)
        for o in range(orientations):
            theta = o * np.pi / orientations
            xr = xs * math.cos(theta) + ys * math.sin(theta)
            yr = -xs * math.sin(theta) + ys * math.cos(theta)
            g = np.exp(-(xr**2 + (aspect * yr) ** 2) / (2 * sigma**2)) * np.cos(2 * np.pi * xr / lam)
            g -= g.mean()
            g /= np.linalg.norm(g)
            bank.append(g)
    return bank


def _conv_same_edge(f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """'same' convolution with edge-replicated borders (constant in -> 0 out
    for zero-mean kernels, including at the borders)."""
    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(f, ((ry, ry), (rx, rx)), mode="edge")
    return fftconvolve(padded, kernel, mode="valid")


def _grid_pool(values: np.ndarray, grid: int) -> np.ndarray:
    h, w = values.shape
    ys = [(i * h) // grid for i in range(grid + 1)]
    xs = [(j * w) // grid for j in range(grid + 1)]
    out = np.empty(grid * grid)
    for i in range(grid):
        for j in range(grid):
            out[i * grid + j] = values[ys[i]: ys[i + 1], xs[j]: xs[j + 1]].mean()
    return out


def _bank_responses(img: np.ndarray, bank: list[np.ndarray]) -> list[np.ndarray]:
    f = img.astype(float) / 255.0
    return [_conv_same_edge(f, k) for k in bank]


def gabor_level(img: np.ndarray, p: GaborParams = GaborParams(), responses=None) -> np.ndarray:
    h, w = img.shape
    if h < p.grid or w < p.grid:
        raise DataError(f"gabor: level {h}x{w} smaller than the {p.grid}x{p.grid} pooling grid")
    if responses is None:
        responses = _bank_responses(img, build_filter_bank(p.wavelengths, p.orientations, p.sigma_ratio, p.aspect))
    return np.concatenate([_grid_pool(np.abs(r), p.grid) for r in responses])


def gist_level(img: np.ndarray, p: GistParams = GistParams(), responses=None) -> np.ndarray:
    h, w = img.shape
    if h < p.grid or w < p.grid:
        raise DataError(f"gist: level {h}x{w} smaller than the {p.grid}x{p.grid} pooling grid")
    if responses is None:
        responses = _bank_responses(img, build_filter_bank(p.wavelengths, p.orientations, p.sigma_ratio, p.aspect))
    return np.concatenate([_grid_pool(r**2, p.grid) for r in responses])


# ---------------------------------------------------------------------------
# Multi-scale keypoint descriptor
# ---------------------------------------------------------------------------

def _dog_stack(f: np.ndarray, p: MskParams) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    k = 2.0 ** (1.0 / p.scales_per_octave)
    sigmas = np.array([p.base_sigma * k**i for i in range(p.num_blurs)])
    blurred = [gaussian_filter(f, sigma=s, mode="nearest") for s in sigmas]
    dogs = np.stack([blurred[i + 1] - blurred[i] for i in range(p.num_blurs - 1)])
    return dogs, sigmas, blurred


def detect_keypoints(img: np.ndarray, p: MskParams = MskParams()) -> list[tuple[int, int, int, float, float]]:
    """Scale-space extrema as (layer, y, x, scale, strength) tuples."""
    f = img.astype(float) / 255.0
    dogs, sigmas, _ = _dog_stack(f, p)
    strong = np.abs(dogs) >= p.contrast_threshold
    if not strong.any():
        return []
    footprint = np.ones((3, 3, 3), dtype=bool)
    is_max = (dogs == maximum_filter(dogs, footprint=footprint, mode="nearest")) & (dogs > 0)
    is_min = (dogs == minimum_filter(dogs, footprint=footprint, mode="nearest")) & (dogs < 0)
    peaks = (is_max | is_min) & strong
    peaks[0] = False
    peaks[-1] = False  # extrema need both scale neighbors
    layers, ys, xs = np.nonzero(peaks)
    out = []
    for l, y, x in zip(layers, ys, xs):
        # Detection scale of DoG layer l: geometric mean of its two blurs.
        scale = float(sigmas[l] * 2 ** (1.0 / (2 * p.scales_per_octave)))
        out.append((int(l), int(y), int(x), scale, float(abs(dogs[l, y, x]))))
    return out


def _keypoint_descriptor(gx: np.ndarray, gy: np.ndarray, y: int, x: int, scale: float, p: MskParams) -> np.ndarray:
    h, w = gx.shape
    radius = max(2, int(round(3.0 * scale)))
    yy, xx = np.mgrid[-radius:radius, -radius:radius] + 0.5
    sy = np.clip(y + np.floor(yy).astype(int), 0, h - 1)
    sx = np.clip(x + np.floor(xx).astype(int), 0, w - 1)
    wx = gx[sy, sx]
    wy = gy[sy, sx]
    mag = np.hypot(wx, wy) * np.exp(-(yy**2 + xx**2) / (2 * (radius / 2.0) ** 2))
    ori = np.mod(np.arctan2(wy, wx), 2 * np.pi)

    g = p.descriptor_grid
    cell_y = np.clip(((yy + radius) * g / (2 * radius)).astype(int), 0, g - 1)
    cell_x = np.clip(((xx + radius) * g / (2 * radius)).astype(int), 0, g - 1)
    ob = np.clip((ori * p.descriptor_bins / (2 * np.pi)).astype(int), 0, p.descriptor_bins - 1)
    flat = (cell_y * g + cell_x) * p.descriptor_bins + ob
    hist = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=p.descriptor_dim).astype(float)
    return hist / math.sqrt((hist**2).sum() + 1e-12)


def msk_descriptor(img: np.ndarray, p: MskParams = MskParams()) -> np.ndarray:
    """Fixed-length vector: descriptors of the K largest-scale keypoints,
    zero-padded when fewer keypoints exist."""
    if p.keypoints < 1:
        raise ValueError(f"keypoint budget must be at least 1, got {p.keypoints}")
    kps = detect_keypoints(img, p)
    out = np.zeros(p.descriptor_dim * p.keypoints)
    if not kps:
        return out
    # Largest detection scale first; strength then position break ties.
    kps.sort(key=lambda t: (-t[3], -t[4], t[1], t[2]))
    kps = kps[: p.keypoints]

    f = img.astype(float) / 255.0
    _, sigmas, blurred = _dog_stack(f, p)
    for i, (layer, y, x, scale, _) in enumerate(kps):
        gy, gx = np.gradient(blurred[layer])
        out[i * p.descriptor_dim: (i + 1) * p.descriptor_dim] = _keypoint_descriptor(gx, gy, y, x, scale, p)
    return out


# ---------------------------------------------------------------------------
# Dispatch, lengths, and the assembled appearance feature
# ---------------------------------------------------------------------------

def descriptor_length(kind: str, params: DescriptorParams, h: int, w: int) -> int:
    """Closed-form output length of one descriptor on one h x w level."""
    if kind == "hog":
        p = params.hog
        ncy, ncx = h // p.cell_size, w // p.cell_size
        if ncy < p.block_cells or ncx < p.block_cells:
            raise DataError(f"hog: level {h}x{w} smaller than one block")
        return (ncy - p.block_cells + 1) * (ncx - p.block_cells + 1) * p.block_cells**2 * p.bins
    if kind == "lbp":
        p = params.lbp
        ncy, ncx = h // p.cell_size, w // p.cell_size
        if ncy < 1 or ncx < 1:
            raise DataError(f"lbp: level {h}x{w} smaller than one cell")
        return ncy * ncx * LBP_BINS
    if kind == "gabor":
        p = params.gabor
        if h < p.grid or w < p.grid:
            raise DataError(f"gabor: level {h}x{w} smaller than the pooling grid")
        return p.n_filters * p.grid**2
    if kind == "gist":
        p = params.gist
        if h < p.grid or w < p.grid:
            raise DataError(f"gist: level {h}x{w} smaller than the pooling grid")
        return p.n_filters * p.grid**2
    if kind == "msk":
        return params.msk.descriptor_dim * params.msk.keypoints
    raise ValueError(f"unknown descriptor kind {kind!r}")


def pyramid_descriptor_length(kind: str, params: DescriptorParams, sizes: list[tuple[int, int]]) -> int:
    return sum(descriptor_length(kind, params, h, w) for h, w in sizes)


def _level_descriptor(kind: str, level: np.ndarray, params: DescriptorParams, level_index: int) -> np.ndarray:
    try:
        if kind == "hog":
            return hog_level(level, params.hog)
        if kind == "lbp":
            return lbp_level(level, params.lbp)
        if kind == "gabor":
            return gabor_level(level, params.gabor)
        if kind == "gist":
            return gist_level(level, params.gist)
        if kind == "msk":
            return msk_descriptor(level, params.msk)
    except DataError as exc:
        raise DataError(f"{exc} (pyramid level {level_index})") from exc
    raise ValueError(f"unknown descriptor kind {kind!r}")


def compute_descriptor(kind: str, pyr: Pyramid, params: DescriptorParams = DescriptorParams()) -> np.ndarray:
    """Per-level descriptors concatenated level-major (level 0 first)."""
    if not pyr.levels:
        raise ValueError("pyramid has no levels")
    return np.concatenate([_level_descriptor(kind, lvl, params, i) for i, lvl in enumerate(pyr.levels)])


def _banks_shared(gp: GaborParams, ip: GistParams) -> bool:
    return (
        gp.wavelengths == ip.wavelengths
        and gp.orientations == ip.orientations
        and gp.sigma_ratio == ip.sigma_ratio
        and gp.aspect == ip.aspect
    )


def compute_all_descriptors(pyr: Pyramid, params: DescriptorParams = DescriptorParams()) -> dict[str, np.ndarray]:
    """All five descriptors; gabor and gist share one convolution pass when
    their filter banks coincide."""
    out: dict[str, list[np.ndarray]] = {kind: [] for kind in DESCRIPTOR_KINDS}
    share = _banks_shared(params.gabor, params.gist)
    bank = build_filter_bank(
        params.gabor.wavelengths, params.gabor.orientations, params.gabor.sigma_ratio, params.gabor.aspect
    )
    for i, level in enumerate(pyr.levels):
        out["hog"].append(_level_descriptor("hog", level, params, i))
        out["lbp"].append(_level_descriptor("lbp", level, params, i))
        out["msk"].append(_level_descriptor("msk", level, params, i))
        if share:
            responses = _bank_responses(level, bank)
            out["gabor"].append(gabor_level(level, params.gabor, responses=responses))
            out["gist"].append(gist_level(level, params.gist, responses=responses))
        else:
            out["gabor"].append(_level_descriptor("gabor", level, params, i))
            out["gist"].append(_level_descriptor("gist", level, params, i))
    return {kind: np.concatenate(parts) for kind, parts in out.items()}


@dataclass(frozen=True)
class AppearanceFeature:
    """Concatenation of per-descriptor PCA-reduced blocks, fixed kind order."""

    values: np.ndarray
    block_slices: dict[str, slice]


def appearance_feature(pyr: Pyramid, reducers: dict[str, PCAModel], params: DescriptorParams = DescriptorParams()) -> AppearanceFeature:
    """Project each raw descriptor through its fitted reducer and concatenate."""
    missing = [k for k in DESCRIPTOR_KINDS if k not in reducers]
    if missing:
        raise ValueError(f"missing reducers for kinds: {missing}")
    raw = compute_all_descriptors(pyr, params)
    blocks, slices = [], {}
    offset = 0
    for kind in DESCRIPTOR_KINDS:
        model = reducers[kind]
        vec = raw[kind]
        if vec.shape[0] != model.input_dim:
            raise DimensionMismatchError(
                f"{kind} descriptor length {vec.shape[0]} does not match reducer input {model.input_dim}"
            )
        if model.n_components < APPEARANCE_BLOCK_DIM:
            logger.warning(
                "%s reducer capacity %d below the target %d dimensions",
                kind, model.n_components, APPEARANCE_BLOCK_DIM,
            )
        proj = pca_transform(model, vec)
        slices[kind] = slice(offset, offset + proj.shape[0])
        offset += proj.shape[0]
        blocks.append(proj)
    return AppearanceFeature(values=np.concatenate(blocks), block_slices=slices)
