"""Synthetic AS-OCT-like quality dataset.

Each image shows a bright arc (the chamber) on a dark background. Scene
parameters decide the grade:

* Good: clear (clarity >= 0.8), uncropped (crop <= 0.1), no artifact.
* Poor: heavy eyelash streaks (artifact >= 0.7) blocking the chamber.
* Limited: everything else, drawn half the time as a cropped chamber with
  no visible artifact and half the time as a clear chamber with mild streaks.

So a strong artifact is sufficient for Deficient but not necessary, while a
clear uncropped chamber is both necessary and sufficient for Good.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError
from .objective import QualityLabel

GENERATOR_VERSION = 1
DATASET_MAGIC = b"PNSA"
DATASET_VERSION = 1

# class counts of the reference AS-OCT dataset
REFERENCE_COUNTS = {"Good": 593, "Limited": 1827, "Poor": 405}

BACKGROUND = 0.1
ARC_GAIN = 0.8
MAX_STREAKS = 6


class Grade(enum.IntEnum):
    GOOD = 0
    LIMITED = 1
    POOR = 2

    @property
    def label(self) -> QualityLabel:
        return QualityLabel.GOOD if self is Grade.GOOD else QualityLabel.DEFICIENT

    @classmethod
    def parse(cls, name) -> Grade:
        if isinstance(name, Grade):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown grade {name!r}; expected Good, Limited or Poor") from None


DEFAULT_PROPORTIONS = {Grade[k.upper()]: v / sum(REFERENCE_COUNTS.values()) for k, v in REFERENCE_COUNTS.items()}


def grades_to_labels(grades) -> np.ndarray:
    return (np.asarray(grades) != Grade.GOOD).astype(np.int64)


@dataclass(frozen=True)
class SceneParams:
    chamber_clarity: float
    crop_fraction: float
    artifact_strength: float
    noise_sigma: float
    rng_seed: int

    def __post_init__(self):
        for name in ("chamber_clarity", "crop_fraction", "artifact_strength"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def grade_from_params(p: SceneParams) -> Grade:
    """The label rule; disjoint by construction of :func:`sample_params`."""
    if p.artifact_strength >= 0.7:
        return Grade.POOR
    if p.chamber_clarity >= 0.8 and p.crop_fraction <= 0.1 and p.artifact_strength == 0.0:
        return Grade.GOOD
    return Grade.LIMITED


def sample_params(grade, rng: np.random.Generator, limited_artifact_fraction: float = 0.5) -> SceneParams:
    grade = Grade.parse(grade)
    noise = rng.uniform(0.0, 0.05)
    seed = int(rng.integers(0, 2**32))
    if grade is Grade.GOOD:
        clarity = rng.uniform(0.8, 1.0)
        crop = rng.uniform(0.0, 0.1)
        artifact = 0.0
    elif grade is Grade.POOR:
        # framing matches Good so the blocking artifact is the only cue
        clarity = rng.uniform(0.3, 1.0)
        crop = rng.uniform(0.0, 0.1)
        artifact = rng.uniform(0.7, 1.0)
    elif rng.random() < limited_artifact_fraction:
        # clear chamber with a mild eyelash
        clarity = rng.uniform(0.5, 1.0)
        crop = rng.uniform(0.0, 0.3)
        artifact = rng.uniform(0.3, 0.6)
    else:
        # cropped chamber, no visible eyelash
        clarity = rng.uniform(0.5, 1.0)
        crop = rng.uniform(0.3, 0.8)
        artifact = rng.uniform(0.0, 0.05)
    return SceneParams(float(clarity), float(crop), float(artifact), float(noise), seed)


def render(params: SceneParams, height: int = 32, width: int = 32) -> np.ndarray:
    """Rasterize a scene into an (height, width) float array in [0, 1]."""
    if height < 16 or width < 16:
        raise ValueError(f"image must be at least 16x16, got {height}x{width}")
    rng = np.random.default_rng(params.rng_seed)
    ys = np.arange(height)[:, None] + 0.5
    xs = np.arange(width)[None, :] + 0.5

    # Upper half of an annulus spanning the full width when uncropped; the
    # crop shifts it right so crop_fraction of its span leaves the frame.
    r_out = width / 2.0
    r_in = r_out - max(2.0, width / 10.0)
    cx = width / 2.0 + 2.0 * r_out * params.crop_fraction
    cy = height * 0.85
    dist = np.hypot(xs - cx, ys - cy)
    arc = (dist <= r_out) & (dist >= r_in) & (ys < cy)
    img = np.full((height, width), BACKGROUND)
    img[arc] += ARC_GAIN * params.chamber_clarity

    n_streaks = math.ceil(params.artifact_strength * MAX_STREAKS)
    top = int(max(0.0, cy - r_out))
    for _ in range(n_streaks):
        x0 = int(rng.integers(0, width - 1))
        w = int(rng.integers(1, 3))
        y0 = top + int(rng.integers(0, max(1, (height - top) // 4)))
        img[y0:, x0 : x0 + w] *= 1.0 - params.artifact_strength

    if params.noise_sigma > 0:
        img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class SyntheticImage:
    pixels: np.ndarray
    grade: Grade
    params: SceneParams | None = None


@dataclass
class ImageSet:
    """A dataset as arrays: pixels (N, H, W) float32 and grades (N,) uint8."""

    pixels: np.ndarray
    grades: np.ndarray
    params: list[SceneParams] | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        self.grades = np.asarray(self.grades, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[0] != self.grades.shape[0]:
            raise ValueError(f"pixels {self.pixels.shape} and grades {self.grades.shape} disagree")

    def __len__(self) -> int:
        return self.grades.shape[0]

    def __getitem__(self, i: int) -> SyntheticImage:
        p = self.params[i] if self.params is not None else None
        return SyntheticImage(self.pixels[i], Grade(int(self.grades[i])), p)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[2]

    def features(self, idx=None) -> np.ndarray:
        px = self.pixels if idx is None else self.pixels[idx]
        return px.reshape(px.shape[0], -1).astype(np.float64)

    def labels(self, idx=None) -> np.ndarray:
        g = self.grades if idx is None else self.grades[idx]
        return grades_to_labels(g)

    def counts(self) -> dict[Grade, int]:
        return {g: int(np.sum(self.grades == g)) for g in Grade}


def apportion(total: int, weights) -> list[int]:
    """Largest-remainder rounding of ``total`` in proportion to ``weights``.

    Ties in the remainder go to the earlier entry.
    """
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or np.any(w < 0):
        raise ValueError("apportion needs a non-negative total and weights")
    if total == 0:
        return [0] * len(w)
    s = w.sum()
    if s <= 0:
        raise ValueError("weights must not all be zero")
    exact = total * w / s
    base = np.floor(exact).astype(np.int64)
    left = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return [int(b) for b in base]


def normalize_proportions(proportions) -> dict[Grade, float]:
    props = {Grade.parse(k): float(v) for k, v in dict(proportions).items()}
    for g in Grade:
        props.setdefault(g, 0.0)
    if any(v < 0 or not math.isfinite(v) for v in props.values()):
        raise ValueError(f"proportions must be finite and non-negative: {props}")
    total = sum(props.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"proportions must sum to 1 (got sum {total:.12g})")
    return props


def generate_dataset(
    n: int,
    proportions=None,
    seed: int = 0,
    height: int = 32,
    width: int = 32,
    limited_artifact_fraction: float = 0.5,
) -> ImageSet:
    """Exact class counts by largest remainder; image i uses RNG stream (seed, i)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    props = normalize_proportions(DEFAULT_PROPORTIONS if proportions is None else proportions)
    counts = apportion(n, [props[g] for g in Grade])
    grades = np.concatenate([np.full(c, int(g), dtype=np.uint8) for g, c in zip(Grade, counts)])
    order_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    grades = grades[order_rng.permutation(n)] if n else grades

    pixels = np.empty((n, height, width), dtype=np.float32)
    params = []
    for i, g in enumerate(grades):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        p = sample_params(Grade(int(g)), rng, limited_artifact_fraction)
        pixels[i] = render(p, height, width)
        params.append(p)
    return ImageSet(pixels, grades, params)


SCENARIOS = ("iid", "limited-holdout", "poor-holdout")
_HELD_OUT = {"limited-holdout": Grade.LIMITED, "poor-holdout": Grade.POOR}


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def _stratified(indices: np.ndarray, grades: np.ndarray, sizes: list[int], rng) -> list[np.ndarray]:
    """Partition ``indices`` into parts of the given sizes, stratified by grade."""
    groups = [rng.permutation(indices[grades[indices] == g]) for g in Grade]
    remaining = [len(gr) for gr in groups]
    taken = [0] * len(groups)
    parts = []
    for size in sizes:
        quota = apportion(size, remaining) if size else [0] * len(groups)
        chunk = []
        for k, q in enumerate(quota):
            chunk.append(groups[k][taken[k] : taken[k] + q])
            taken[k] += q
            remaining[k] -= q
        parts.append(np.sort(np.concatenate(chunk)).astype(np.int64))
    return parts


def make_split(dataset: ImageSet, scenario: str, seed: int = 0) -> Split:
    """Disjoint train/val/test index arrays for one of the three protocols.

    ``iid`` is a 70/15/15 split of everything; the holdout scenarios use a
    70/30 train/val split of the remaining grades and test on the held-out
    grade only.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    grades = dataset.grades
    present = set(int(g) for g in np.unique(grades))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B11]))
    all_idx = np.arange(len(dataset))

    if scenario == "iid":
        if Grade.GOOD not in present or not present & {Grade.LIMITED, Grade.POOR}:
            raise ValueError("iid split needs both Good and Deficient images")
        n = len(all_idx)
        n_train = (7 * n + 5) // 10
        n_val = (3 * n + 10) // 20
        train, val, test = _stratified(all_idx, grades, [n_train, n_val, n - n_train - n_val], rng)
        return Split(train, val, test)

    held = _HELD_OUT[scenario]
    kept = [g for g in Grade if g is not held]
    missing = [g.name for g in (held, *kept) if g not in present]
    if missing:
        raise ValueError(f"dataset lacks grades required by {scenario}: {missing}")
    pool = all_idx[grades != held]
    n_train = (7 * len(pool) + 5) // 10
    train, val = _stratified(pool, grades, [n_train, len(pool) - n_train], rng)
    test = all_idx[grades == held]
    return Split(train, val, test)


def write_dataset(dataset: ImageSet, path) -> None:
    """Write the binary dataset file (little-endian, f32 pixels)."""
    n = len(dataset)
    h, w = dataset.image_shape
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<IIII", DATASET_VERSION, n, h, w))
        px = dataset.pixels.astype("<f4")
        for i in range(n):
            f.write(struct.pack("<B", int(dataset.grades[i])))
            f.write(px[i].tobytes(order="C"))


def read_dataset(path) -> ImageSet:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 20 or buf[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset file (bad magic or too short)")
    version, n, h, w = struct.unpack_from("<IIII", buf, 4)
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported dataset version {version}")
    rec = 1 + 4 * h * w
    if len(buf) != 20 + n * rec:
        raise DatasetFormatError(f"{path}: expected {20 + n * rec} bytes for {n} records, found {len(buf)}")
    if n == 0:
        return ImageSet(np.zeros((0, h, w), np.float32), np.zeros(0, np.uint8))
    raw = np.frombuffer(buf, dtype=np.uint8, offset=20).reshape(n, rec)
    grades = raw[:, 0].copy()
    if grades.max() > 2:
        raise DatasetFormatError(f"{path}: invalid grade byte {grades.max()}")
    pixels = raw[:, 1:].copy().view("<f4").reshape(n, h, w).astype(np.float32)
    return ImageSet(pixels, grades)


def format_proportions(props) -> str:
    return ",".join(f"{Grade.parse(k).name.capitalize()}={float(v)!r}" for k, v in props.items())


def parse_proportions(text: str) -> dict[Grade, float]:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, sep, value = part.partition("=")
        if not sep:
            key, sep, value = part.partition(":")
        if not sep:
            raise ValueError(f"bad proportion entry {part!r}; expected Grade=value")
        out[Grade.parse(key.strip())] = float(value)
    return out


def write_metadata(path, *, seed: int, n: int, proportions, height: int, width: int, limited_artifact_fraction: float, extra=None) -> None:
    lines = {
        "generator_version": GENERATOR_VERSION,
        "format_version": DATASET_VERSION,
        "seed": seed,
        "n": n,
        "height": height,
        "width": width,
        "proportions": format_proportions(proportions),
        "limited_artifact_fraction": repr(float(limited_artifact_fraction)),
    }
    lines.update(extra or {})
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        for k, v in lines.items():
            f.write(f"{k}: {v}\n")
    os.replace(tmp, path)


def read_metadata(path) -> dict[str, str]:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition(":")
                out[k.strip()] = v.strip()
    return out
