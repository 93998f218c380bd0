"""On-disk synthetic control datasets: rendered faces with landmarks,
masks, minutiae, and trait scores.

Each sample is a smooth latent-driven deformation of a fixed 21-point
face template, rendered as a simple grayscale face (head ellipse, eyes,
brows, nose, mouth, smooth texture) and placed into the image with a
random similarity transform that the preprocessing pipeline is expected
to undo. Traits named in ``signal_traits`` get scores tied to the first
latent (so their labels are recoverable from geometry); all other
traits get independent noise scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .dataset import TRAIT_NAMES

# 21-point template in a unit frame: pupils at (-0.5, 0) and (0.5, 0),
# y grows downward. Indices 0 and 1 are the pupils.
FACE_TEMPLATE = np.array([
    [-0.50, 0.00], [0.50, 0.00],                    # pupils
    [-0.70, 0.02], [-0.30, 0.02],                   # left eye corners
    [0.30, 0.02], [0.70, 0.02],                     # right eye corners
    [-0.65, -0.28], [-0.35, -0.33],                 # left brow
    [0.35, -0.33], [0.65, -0.28],                   # right brow
    [0.00, 0.10], [0.00, 0.45],                     # nose bridge, tip
    [-0.15, 0.52], [0.15, 0.52],                    # nostrils
    [-0.30, 0.80], [0.30, 0.80],                    # mouth corners
    [0.00, 0.72], [0.00, 0.92],                     # upper / lower lip
    [-0.68, 0.65], [0.68, 0.65],                    # jaw
    [0.00, 1.15],                                   # chin
])

# Latent deformation fields (3 x 21 x 2): mouth/jaw width, nose length
# and brow height, vertical elongation.
_BASIS = np.zeros((3, 21, 2))
_BASIS[0, 14] = (-0.9, 0.0)
_BASIS[0, 15] = (0.9, 0.0)
_BASIS[0, 18] = (-0.7, 0.1)
_BASIS[0, 19] = (0.7, 0.1)
_BASIS[0, 20] = (0.0, 0.8)
_BASIS[1, 11] = (0.0, 0.8)
_BASIS[1, 12] = (-0.2, 0.7)
_BASIS[1, 13] = (0.2, 0.7)
_BASIS[1, 6:10, 1] = -0.5
_BASIS[2, :, 1] = 0.35
_BASIS = 0.1 * _BASIS


@dataclass(frozen=True)
class SynthManifestSpec:
    n: int = 186
    seed: int = 0
    image_size: int = 128
    signal_traits: tuple[str, ...] = ("cons", "vigil")
    # Minimum distance of the score-driving uniform variate from the
    # class boundary at 0.5; gives classifiers a geometric margin.
    label_margin: float = 0.15
    landmark_jitter: float = 0.01
    n_minutiae: int = 24

    def __post_init__(self):
        unknown = set(self.signal_traits) - set(TRAIT_NAMES)
        if unknown:
            raise ValueError(f"unknown signal traits: {sorted(unknown)}")
        if not 0 <= self.label_margin < 0.5:
            raise ValueError(f"label margin must be in [0, 0.5), got {self.label_margin}")


def _sample_latents(rng: np.random.Generator, margin: float) -> np.ndarray:
    z = rng.standard_normal(3)
    # Keep the score-driving latent away from the class boundary.
    from scipy.special import ndtr

    while abs(ndtr(z[0]) - 0.5) <= margin:
        z[0] = rng.standard_normal()
    return z


def _render_face(size: int, unit_points: np.ndarray, place_rot: float, place_scale: float,
                 place_center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Rasterize the face; ``unit_points`` are the deformed template points."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    c, s = math.cos(-place_rot), math.sin(-place_rot)
    dx = xs - place_center[0]
    dy = ys - place_center[1]
    ux = (c * dx - s * dy) / place_scale
    uy = (s * dx + c * dy) / place_scale

    img = np.full((size, size), 205.0)
    img += 12.0 * gaussian_filter(rng.standard_normal((size, size)), 3.0)

    jaw_half = 0.68 + (unit_points[19, 0] - 0.68)  # follows the jaw latent
    head = ((ux / (jaw_half + 0.24)) ** 2 + ((uy - 0.42) / 1.05) ** 2) <= 1.0
    img[head] = 158.0 + 20.0 * gaussian_filter(rng.standard_normal((size, size)), 2.0)[head]

    for pupil in (unit_points[0], unit_points[1]):
        eye = (ux - pupil[0]) ** 2 + (uy - pupil[1]) ** 2 <= 0.09**2
        img[eye] = 45.0
    for a, b in ((6, 7), (8, 9)):
        mid = 0.5 * (unit_points[a] + unit_points[b])
        brow = (np.abs(ux - mid[0]) <= 0.18) & (np.abs(uy - mid[1]) <= 0.035)
        img[brow] = 95.0
    nose = (np.abs(ux - unit_points[11, 0]) <= 0.05) & (uy >= 0.1) & (uy <= unit_points[11, 1])
    img[nose] = 125.0
    mouth_half = unit_points[15, 0]
    mouth = (np.abs(ux) <= mouth_half) & (np.abs(uy - unit_points[16, 1] - 0.06) <= 0.055)
    img[mouth] = 70.0

    mask = np.zeros((size, size), dtype=np.uint8)
    mask[head] = 255
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask


def generate_manifest(out_dir: Path | str, spec: SynthManifestSpec = SynthManifestSpec()) -> Path:
    """Write a complete synthetic dataset and return the manifest path."""
    out = Path(out_dir)
    for sub in ("landmarks", "images", "masks", "minutiae"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    ipd_px = 0.30 * size

    records = []
    for i in range(spec.n):
        sid = f"s{i:04d}"
        z = _sample_latents(rng, spec.label_margin)
        points = FACE_TEMPLATE + np.tensordot(z, _BASIS, axes=1)
        points = points + spec.landmark_jitter * rng.standard_normal((21, 2))

        rot = rng.uniform(-0.12, 0.12)
        scale = ipd_px * rng.uniform(0.92, 1.08)
        center = np.array([0.5 * size, 0.40 * size]) + rng.uniform(-0.03 * size, 0.03 * size, size=2)
        c, s = math.cos(rot), math.sin(rot)
        img_points = points @ (scale * np.array([[c, s], [-s, c]])) + center

        img, mask = _render_face(size, points, rot, scale, center, rng)
        Image.fromarray(img).save(out / "images" / f"{sid}.png")
        Image.fromarray(mask).save(out / "masks" / f"{sid}.png")

        lm_lines = [f"{float(p[0])!r},{float(p[1])!r}" for p in img_points]
        (out / "landmarks" / f"{sid}.txt").write_text("\n".join(lm_lines) + "\n")

        minutiae = np.column_stack([
            rng.uniform(0, 300, spec.n_minutiae),
            rng.uniform(0, 300, spec.n_minutiae),
            rng.uniform(-math.pi, math.pi, spec.n_minutiae),
        ])
        mn_lines = [f"{float(m[0])!r},{float(m[1])!r},{float(m[2])!r}" for m in minutiae]
        (out / "minutiae" / f"{sid}.txt").write_text("\n".join(mn_lines) + "\n")

        from scipy.special import ndtr

        u_signal = float(ndtr(z[0]))
        traits = {}
        for name in TRAIT_NAMES:
            if name in spec.signal_traits:
                traits[name] = int(np.clip(1 + math.floor(10 * u_signal), 1, 10))
            else:
                traits[name] = int(rng.integers(1, 11))
        records.append({
            "id": sid,
            "gender": "male" if i % 2 == 0 else "female",
            "landmarks": f"landmarks/{sid}.txt",
            "image": f"images/{sid}.png",
            "mask": f"masks/{sid}.png",
            "minutiae": f"minutiae/{sid}.txt",
            "traits": traits,
            "intelligence": float(rng.uniform(0.0, 1.0)),
        })

    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps({"samples": records}, indent=2) + "\n")
    return manifest_path
