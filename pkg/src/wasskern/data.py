"""Dataset ingestion, export, and balanced split management.

Two interchange formats are supported:

IDX (the MNIST distribution format, big endian):
    image file:  u32 magic 0x00000803 | u32 count | u32 rows | u32 cols | u8 pixels...
    label file:  u32 magic 0x00000801 | u32 count | u8 labels...

CSV with a mandatory header ``label,w,h,p0,...,p{w*h-1}``; every data row
carries the label, the image dimensions, then the row-major pixel values
(any nonnegative reals).

Pixel intensities stay at their raw scale; normalization to probability
measures happens downstream, and the Euclidean baselines consume the raw
vectors directly.

Splits are drawn with numpy's PCG64 generator, which is seedable and has a
stable cross-platform stream, so a (seed, sizes) pair reproduces the same
split everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .measure import DiscreteMeasure, GrayImage, PixelGrid, image_to_measure

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledImageSet:
    """Images of uniform dimensions with integer labels.

    ``images`` is (count, width*height) row-major float64; ``source_indices``
    tracks provenance through subsampling for disjointness checks.
    """

    width: int
    height: int
    images: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    source: str = ""
    source_indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        imgs = np.ascontiguousarray(self.images, dtype=np.float64)
        labs = np.ascontiguousarray(self.labels, dtype=np.int64)
        if imgs.ndim != 2 or imgs.shape[1] != self.width * self.height:
            raise UsageError(f"images shape {imgs.shape} does not match {self.width}x{self.height}")
        if labs.ndim != 1 or labs.size != imgs.shape[0]:
            raise UsageError("images and labels must have the same length")
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "labels", labs)

    def __len__(self) -> int:
        return self.images.shape[0]

    def image(self, i: int) -> GrayImage:
        return GrayImage(width=self.width, height=self.height, intensities=self.images[i])

    def grid(self) -> PixelGrid:
        return PixelGrid.of(self.width, self.height)

    def take(self, indices: np.ndarray, source: str = "") -> "LabeledImageSet":
        indices = np.asarray(indices, dtype=np.int64)
        origin = (
            self.source_indices[indices]
            if self.source_indices is not None
            else indices.copy()
        )
        return LabeledImageSet(
            width=self.width,
            height=self.height,
            images=self.images[indices],
            labels=self.labels[indices],
            source=source or self.source,
            source_indices=origin,
        )

    def to_measures(self, grid: PixelGrid | None = None, prune: bool = False) -> list[DiscreteMeasure]:
        grid = grid or self.grid()
        return [image_to_measure(self.image(i), grid, prune=prune) for i in range(len(self))]


@dataclass(frozen=True)
class SplitPlan:
    train_size: int
    validation_size: int
    test_size: int
    rng_seed: int
    core_size: int | None = None

    def __post_init__(self):
        for name in ("train_size", "validation_size", "test_size"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be at least 1")
        if self.core_size is not None and not (1 <= self.core_size <= self.train_size):
            raise UsageError("core_size must lie in [1, train_size]")


def _read_u32(buf: bytes, offset: int, path: str, what: str) -> int:
    if offset + 4 > len(buf):
        raise DataError(f"{path}: truncated while reading {what} at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path: str | Path, labels_path: str | Path) -> LabeledImageSet:
    """Parse an IDX image/label file pair; pixels map to floats in [0, 255]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    raw = images_path.read_bytes()
    magic = _read_u32(raw, 0, str(images_path), "magic")
    if magic != IDX_IMAGE_MAGIC:
        raise DataError(
            f"{images_path}: bad image magic 0x{magic:08x} at byte 0, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    count = _read_u32(raw, 4, str(images_path), "count")
    rows = _read_u32(raw, 8, str(images_path), "rows")
    cols = _read_u32(raw, 12, str(images_path), "cols")
    expected = 16 + count * rows * cols
    if len(raw) < expected:
        raise DataError(
            f"{images_path}: truncated pixel payload, expected {expected} bytes, found {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)

    raw_labels = labels_path.read_bytes()
    lmagic = _read_u32(raw_labels, 0, str(labels_path), "magic")
    if lmagic != IDX_LABEL_MAGIC:
        raise DataError(
            f"{labels_path}: bad label magic 0x{lmagic:08x} at byte 0, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    lcount = _read_u32(raw_labels, 4, str(labels_path), "count")
    if lcount != count:
        raise DataError(
            f"label count {lcount} in {labels_path} does not match image count {count}"
        )
    if len(raw_labels) < 8 + count:
        raise DataError(f"{labels_path}: truncated label payload at byte {len(raw_labels)}")
    labels = np.frombuffer(raw_labels, dtype=np.uint8, count=count, offset=8)

    return LabeledImageSet(
        width=cols,
        height=rows,
        images=pixels.reshape(count, rows * cols).astype(np.float64),
        labels=labels.astype(np.int64),
        source=str(images_path),
    )


def save_idx(dataset: LabeledImageSet, images_path: str | Path, labels_path: str | Path) -> None:
    """Write an IDX pair; pixel values must be integral in [0, 255]."""
    imgs = dataset.images
    if np.any(imgs < 0) or np.any(imgs > 255) or np.any(imgs != np.round(imgs)):
        raise DataError("IDX export needs integral pixel values in [0, 255]")
    if np.any(dataset.labels < 0) or np.any(dataset.labels > 255):
        raise DataError("IDX export needs labels in [0, 255]")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(dataset), dataset.height, dataset.width))
        fh.write(imgs.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, len(dataset)))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def load_csv(path: str | Path) -> LabeledImageSet:
    """Parse the CSV interchange format (see the module docstring)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = header.split(",")
        if len(fields) < 4 or fields[:3] != ["label", "w", "h"]:
            raise DataError(f"{path}:1: header must start with 'label,w,h,p0,...', got {header!r}")
        n_pixels = len(fields) - 3
        images: list[np.ndarray] = []
        labels: list[int] = []
        width = height = None
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3 + n_pixels:
                raise DataError(
                    f"{path}:{lineno}: expected {3 + n_pixels} fields, found {len(parts)}"
                )
            try:
                label = int(parts[0])
                w, h = int(parts[1]), int(parts[2])
                pixels = np.array([float(p) for p in parts[3:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if w * h != n_pixels:
                raise DataError(
                    f"{path}:{lineno}: dimensions {w}x{h} do not match {n_pixels} pixel columns"
                )
            if width is None:
                width, height = w, h
            elif (w, h) != (width, height):
                raise DataError(f"{path}:{lineno}: dimensions {w}x{h} differ from first row")
            if np.any(pixels < 0):
                raise DataError(f"{path}:{lineno}: negative pixel value")
            images.append(pixels)
            labels.append(label)
    if not images:
        if n_pixels < 1:
            raise DataError(f"{path}: header declares no pixel columns")
        return LabeledImageSet(
            width=n_pixels,
            height=1,
            images=np.zeros((0, n_pixels)),
            labels=np.zeros(0, dtype=np.int64),
            source=str(path),
        )
    return LabeledImageSet(
        width=width,
        height=height,
        images=np.stack(images),
        labels=np.array(labels, dtype=np.int64),
        source=str(path),
    )


def save_csv(dataset: LabeledImageSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        pixel_names = ",".join(f"p{i}" for i in range(dataset.width * dataset.height))
        fh.write(f"label,w,h,{pixel_names}\n")
        for i in range(len(dataset)):
            pixels = ",".join(repr(float(p)) for p in dataset.images[i])
            fh.write(f"{dataset.labels[i]},{dataset.width},{dataset.height},{pixels}\n")


def split_rng(seed: int) -> np.random.Generator:
    """The package-wide split generator: PCG64 seeded directly."""
    return np.random.Generator(np.random.PCG64(seed))


def balanced_subsample(
    dataset: LabeledImageSet, plan: SplitPlan
) -> tuple[LabeledImageSet, LabeledImageSet, LabeledImageSet]:
    """Disjoint class-balanced train/validation/test subsets.

    Per-class quotas differ by at most one inside each split (the remainder
    goes to the smallest class labels). Each class pool is shuffled once
    with the seeded generator and carved sequentially, so splits are
    deterministic and disjoint by construction.
    """
    classes = np.unique(dataset.labels)
    rng = split_rng(plan.rng_seed)
    sizes = (plan.train_size, plan.validation_size, plan.test_size)

    quotas = []
    for size in sizes:
        base, extra = divmod(size, classes.size)
        quotas.append({c: base + (1 if rank < extra else 0) for rank, c in enumerate(classes)})

    pools = {}
    deficits = []
    for c in classes:
        pool = np.flatnonzero(dataset.labels == c)
        need = sum(q[c] for q in quotas)
        if pool.size < need:
            deficits.append(f"class {c}: need {need}, have {pool.size}")
        pools[c] = rng.permutation(pool)
    if deficits:
        raise UsageError("insufficient samples per class: " + "; ".join(deficits))

    cursors = {c: 0 for c in classes}
    split_names = ("train", "validation", "test")
    out = []
    for quota, name in zip(quotas, split_names):
        chosen = []
        for c in classes:
            take = quota[c]
            start = cursors[c]
            chosen.append(pools[c][start : start + take])
            cursors[c] = start + take
        indices = np.sort(np.concatenate(chosen))
        out.append(dataset.take(indices, source=f"{dataset.source}[{name}]"))
    return tuple(out)


# ---------------------------------------------------------------------------
# Synthetic shape dataset
#
# Ten glyph classes rendered on a 28x28 grid with random translation and
# size jitter. Same-class samples are near-copies displaced on the grid,
# which is exactly the regime where transport distances stay small while
# pixelwise Euclidean distances blow up; useful for tests and demos when no
# real digit data is on disk.

SHAPE_CLASS_NAMES = (
    "disk",
    "ring",
    "hbar",
    "vbar",
    "cross",
    "diag",
    "corner",
    "tee",
    "dots",
    "box",
)


def _render_shape(cls: int, rng: np.random.Generator, side: int = 28) -> np.ndarray:
    img = np.zeros((side, side))
    scale = rng.uniform(0.85, 1.15)
    r = 6.0 * scale
    # Jitter mimics handwriting variation: translation of a few pixels plus
    # rotation and independent axis stretch. Pixelwise overlap between
    # same-class samples is rare under these, while the mass displacement
    # (what transport sees) stays small.
    cy, cx = side / 2 - 0.5 + rng.uniform(-2.0, 2.0, size=2)
    angle = rng.uniform(-0.3, 0.3)
    sy, sx = rng.uniform(0.82, 1.24, size=2)
    yy, xx = np.mgrid[0:side, 0:side]
    dy0, dx0 = yy - cy, xx - cx
    dy = (np.cos(angle) * dy0 - np.sin(angle) * dx0) / sy
    dx = (np.sin(angle) * dy0 + np.cos(angle) * dx0) / sx
    rad = np.sqrt(dy * dy + dx * dx)
    thick = rng.uniform(1.05, 1.95)
    if cls == 0:  # disk
        img[rad <= 0.75 * r] = 1.0
    elif cls == 1:  # ring
        img[(rad <= r + thick / 2) & (rad >= r - thick)] = 1.0
    elif cls == 2:  # horizontal bar
        img[(np.abs(dy) <= thick) & (np.abs(dx) <= 1.6 * r)] = 1.0
    elif cls == 3:  # vertical bar
        img[(np.abs(dx) <= thick) & (np.abs(dy) <= 1.6 * r)] = 1.0
    elif cls == 4:  # cross
        img[(np.abs(dy) <= thick) & (np.abs(dx) <= 1.1 * r)] = 1.0
        img[(np.abs(dx) <= thick) & (np.abs(dy) <= 1.1 * r)] = 1.0
    elif cls == 5:  # diagonal stroke
        img[(np.abs(dy - dx) <= 1.5 * thick) & (rad <= 1.5 * r)] = 1.0
    elif cls == 6:  # corner (L)
        img[(np.abs(dx + r / 2) <= thick) & (dy >= -r) & (dy <= r)] = 1.0
        img[(np.abs(dy - r) <= thick) & (dx >= -r / 2) & (dx <= r)] = 1.0
    elif cls == 7:  # tee
        img[(np.abs(dy + r / 2) <= thick) & (np.abs(dx) <= 1.2 * r)] = 1.0
        img[(np.abs(dx) <= thick) & (dy >= -r / 2) & (dy <= 1.2 * r)] = 1.0
    elif cls == 8:  # two dots
        for sx in (-0.9 * r, 0.9 * r):
            img[np.sqrt((dy) ** 2 + (dx - sx) ** 2) <= 0.55 * r + thick / 2] = 1.0
    else:  # box outline
        inside = (np.abs(dy) <= r) & (np.abs(dx) <= r)
        core = (np.abs(dy) <= r - thick) & (np.abs(dx) <= r - thick)
        img[inside & ~core] = 1.0
    # Near-constant total ink per image: no class is identifiable from its
    # mass alone, only from where the mass sits.
    img *= rng.uniform(8100, 9900) / img.sum()
    noise = rng.uniform(0, 12, size=img.shape) * (rng.random(img.shape) < 0.005)
    img = np.maximum(img, noise)
    return np.round(np.clip(img, 0, 255))


def synthetic_shapes(
    count: int, seed: int = 0, side: int = 28, classes: int = 10
) -> LabeledImageSet:
    """Deterministic labeled shape images, classes cycling 0..classes-1."""
    if not (2 <= classes <= len(SHAPE_CLASS_NAMES)):
        raise UsageError(f"classes must be in [2, {len(SHAPE_CLASS_NAMES)}]")
    rng = split_rng(seed)
    images = np.empty((count, side * side))
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        cls = i % classes
        images[i] = _render_shape(cls, rng, side).ravel()
        labels[i] = cls
    return LabeledImageSet(
        width=side, height=side, images=images, labels=labels, source=f"synthetic(seed={seed})"
    )
