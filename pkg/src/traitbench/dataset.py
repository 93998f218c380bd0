"""Manifest loading, label construction, and synthetic control data.

A dataset is described by a JSON manifest listing one record per
sample: gender tag, landmark file (21 rows of ``x,y``), face image,
optional binary mask, optional minutia file (rows of
``x,y,theta_radians`` with an optional trailing confidence column),
the 20 trait scores (integers 1..10) and an intelligence percentile.
All paths are resolved relative to the manifest location.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry import NUM_LANDMARKS, NUM_MINUTIAE, LandmarkSet, MinutiaSet

# The 16 primary traits followed by the 4 second-order factors, in the
# conventional reporting order.
PRIMARY_TRAITS = (
    "warm", "reas", "stab", "domin", "live", "cons", "soci", "sens",
    "vigil", "abst", "priv", "appr", "open", "reli", "perf", "tens",
)
SECOND_ORDER_TRAITS = ("adap", "intro", "impet", "cowa")
TRAIT_NAMES = PRIMARY_TRAITS + SECOND_ORDER_TRAITS
INTELLIGENCE = "intell"

GENDERS = ("male", "female")

# Trait scores 1..5 map to class 0, 6..10 to class 1.
TRAIT_CLASS_THRESHOLD = 6
# Intelligence percentiles <= 0.75 map to class 0, > 0.75 to class 1.
INTELLIGENCE_CLASS_THRESHOLD = 0.75


@dataclass(frozen=True)
class TraitScores:
    """The 20 trait scores, each an integer in [1, 10]."""

    scores: dict[str, int]

    def __post_init__(self):
        if set(self.scores) != set(TRAIT_NAMES):
            missing = sorted(set(TRAIT_NAMES) - set(self.scores))
            extra = sorted(set(self.scores) - set(TRAIT_NAMES))
            raise DataError(f"trait scores must cover exactly the 20 traits (missing {missing}, unexpected {extra})")
        for name, value in self.scores.items():
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise DataError(f"trait {name!r} score must be an integer, got {value!r}")
            if not 1 <= value <= 10:
                raise DataError(f"trait {name!r} score {value} outside [1, 10]")
        object.__setattr__(self, "scores", dict(self.scores))


@dataclass(frozen=True)
class IntelligenceScore:
    """Percentile stored in [0, 1]; percent inputs are divided by 100."""

    percentile: float

    def __post_init__(self):
        p = float(self.percentile)
        if 1.0 < p <= 100.0:
            p /= 100.0
        if not 0.0 <= p <= 1.0:
            raise DataError(f"intelligence percentile {self.percentile} outside [0, 1] (or percent outside (1, 100])")
        object.__setattr__(self, "percentile", p)


@dataclass(frozen=True)
class LabelSet:
    """Binary classes and regression targets for the 20 traits + intelligence."""

    binary: dict[str, int]
    targets: dict[str, float]


def binarize_labels(traits: TraitScores, intelligence: IntelligenceScore) -> LabelSet:
    """Deterministic binarization: scores 6..10 and percentiles > 0.75 are class 1."""
    binary = {name: int(score >= TRAIT_CLASS_THRESHOLD) for name, score in traits.scores.items()}
    binary[INTELLIGENCE] = int(intelligence.percentile > INTELLIGENCE_CLASS_THRESHOLD)
    targets = {name: float(score) for name, score in traits.scores.items()}
    targets[INTELLIGENCE] = intelligence.percentile
    return LabelSet(binary=binary, targets=targets)


@dataclass(frozen=True)
class Sample:
    sample_id: str
    gender: str
    landmarks: LandmarkSet
    traits: TraitScores
    intelligence: IntelligenceScore
    labels: LabelSet
    image_path: Path | None = None
    mask_path: Path | None = None
    minutiae: MinutiaSet | None = None

    def load_image(self) -> np.ndarray:
        if self.image_path is None:
            raise DataError(f"sample {self.sample_id!r} has no image")
        return load_gray_image(self.image_path)

    def load_mask(self) -> np.ndarray:
        if self.mask_path is None:
            raise DataError(f"sample {self.sample_id!r} has no mask")
        return load_gray_image(self.mask_path)


@dataclass(frozen=True)
class Manifest:
    samples: tuple[Sample, ...]
    root: Path

    def filter_gender(self, gender: str) -> "Manifest":
        if gender == "all":
            return self
        if gender not in GENDERS:
            raise DataError(f"unknown gender filter {gender!r}")
        kept = tuple(s for s in self.samples if s.gender == gender)
        return Manifest(samples=kept, root=self.root)

    def binary_labels(self, target: str) -> np.ndarray:
        return np.array([s.labels.binary[target] for s in self.samples], dtype=np.int64)

    def regression_targets(self, target: str) -> np.ndarray:
        return np.array([s.labels.targets[target] for s in self.samples], dtype=float)

    @property
    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]


def load_gray_image(path: Path | str) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"image file {path} does not exist")
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def load_landmark_file(path: Path | str, pupil_indices=(0, 1)) -> LandmarkSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"landmark file {path} does not exist")
    rows = _read_csv_rows(path)
    if len(rows) != NUM_LANDMARKS:
        raise DataError(f"{path}: expected {NUM_LANDMARKS} points, got {len(rows)}")
    pts = np.array([[row[0], row[1]] for row in rows], dtype=float)
    return LandmarkSet(points=pts, pupil_indices=tuple(pupil_indices))


def load_minutia_file(path: Path | str) -> MinutiaSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"minutia file {path} does not exist")
    rows = _read_csv_rows(path)
    if len(rows) < NUM_MINUTIAE:
        raise DataError(f"{path}: expected at least {NUM_MINUTIAE} minutiae, got {len(rows)}")
    widths = {len(r) for r in rows}
    if widths == {3}:
        return MinutiaSet(minutiae=np.array(rows, dtype=float))
    if widths == {4}:
        arr = np.array(rows, dtype=float)
        return MinutiaSet(minutiae=arr[:, :3], confidence=arr[:, 3])
    raise DataError(f"{path}: rows must be x,y,theta or x,y,theta,confidence")


def _read_csv_rows(path: Path) -> list[list[float]]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return rows


def load_manifest(path: Path | str, pupil_indices=(0, 1)) -> Manifest:
    """Load and validate a manifest; every referenced file must exist."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "samples" not in raw:
        raise DataError(f"manifest {path} must be an object with a 'samples' list")
    root = path.parent

    samples = []
    seen_ids = set()
    for i, rec in enumerate(raw["samples"]):
        sid = rec.get("id")
        if not sid:
            raise DataError(f"sample #{i}: missing 'id'")
        if sid in seen_ids:
            raise DataError(f"sample {sid!r}: duplicate identifier")
        seen_ids.add(sid)

        gender = rec.get("gender")
        if gender not in GENDERS:
            raise DataError(f"sample {sid!r}: gender must be one of {GENDERS}, got {gender!r}")

        try:
            landmarks = load_landmark_file(root / _require(rec, sid, "landmarks"), pupil_indices)
        except DataError as exc:
            raise DataError(f"sample {sid!r}, field 'landmarks': {exc}") from exc

        image_path = None
        if "image" in rec and rec["image"] is not None:
            image_path = root / rec["image"]
            if not image_path.exists():
                raise DataError(f"sample {sid!r}, field 'image': file {image_path} does not exist")

        mask_path = None
        if "mask" in rec and rec["mask"] is not None:
            mask_path = root / rec["mask"]
            if not mask_path.exists():
                raise DataError(f"sample {sid!r}, field 'mask': file {mask_path} does not exist")

        minutiae = None
        if "minutiae" in rec and rec["minutiae"] is not None:
            try:
                minutiae = load_minutia_file(root / rec["minutiae"])
            except DataError as exc:
                raise DataError(f"sample {sid!r}, field 'minutiae': {exc}") from exc

        try:
            traits = TraitScores(scores=rec["traits"]) if "traits" in rec else None
            if traits is None:
                raise DataError("missing 'traits'")
            intelligence = IntelligenceScore(percentile=rec["intelligence"])
        except DataError as exc:
            raise DataError(f"sample {sid!r}: {exc}") from exc
        except KeyError as exc:
            raise DataError(f"sample {sid!r}: missing field {exc}") from exc

        samples.append(
            Sample(
                sample_id=sid,
                gender=gender,
                landmarks=landmarks,
                traits=traits,
                intelligence=intelligence,
                labels=binarize_labels(traits, intelligence),
                image_path=image_path,
                mask_path=mask_path,
                minutiae=minutiae,
            )
        )
    return Manifest(samples=tuple(samples), root=root)


def _require(rec: dict, sid: str, key: str):
    if key not in rec or rec[key] is None:
        raise DataError(f"sample {sid!r}: missing field {key!r}")
    return rec[key]


# ---------------------------------------------------------------------------
# Synthetic controls
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Control-data recipe; identical specs generate bit-identical data."""

    n: int
    feature_dim: int
    planted_model: str = "linear-signal"  # or "pure-noise"
    seed: int = 0
    noise: float = 0.0
    # Gap (in score units) inserted between the two classes along the
    # planted direction, so classifiers have a learnable margin.
    margin: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"n must be at least 4, got {self.n}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be at least 1, got {self.feature_dim}")
        if self.planted_model not in ("linear-signal", "pure-noise"):
            raise ValueError(f"unknown planted model {self.planted_model!r}")


@dataclass(frozen=True)
class SyntheticLabels:
    binary: np.ndarray
    target: np.ndarray
    coef: np.ndarray
    threshold: float


def synthesize_dataset(spec: SyntheticSpec) -> tuple[np.ndarray, SyntheticLabels]:
    """Draw a control dataset with a planted linear signal or pure noise.

    In linear-signal mode the continuous target is exactly X @ coef
    plus optional Gaussian noise, and the binary labels threshold the
    clean linear score at its median (the classes are additionally
    separated by ``margin`` along the planted direction).
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.feature_dim
    X = rng.standard_normal((n, d))

    if spec.planted_model == "pure-noise":
        labels = SyntheticLabels(
            binary=rng.integers(0, 2, size=n),
            target=rng.uniform(1.0, 10.0, size=n),
            coef=np.zeros(d),
            threshold=0.0,
        )
        return X, labels

    coef = np.zeros(d)
    coef[: min(3, d)] = 1.0
    raw = X @ coef
    threshold = float(np.median(raw))
    side = np.where(raw > threshold, 1.0, -1.0)
    X = X + (spec.margin * side)[:, None] * (coef / (coef @ coef))
    clean = X @ coef
    target = clean + spec.noise * rng.standard_normal(n)
    labels = SyntheticLabels(
        binary=(clean > threshold).astype(np.int64),
        target=target,
        coef=coef,
        threshold=threshold,
    )
    return X, labels
