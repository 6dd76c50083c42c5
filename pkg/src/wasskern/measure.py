"""Grayscale images as discrete probability measures on a pixel grid.

Pixel coordinates are normalized to the unit square: the row-major lattice
points are divided by max(width, height) - 1, so the largest squared
distance on a square grid is 2. The entropic regularization strength used
downstream (epsilon = 0.4 by default) is only meaningful at this scale;
with raw pixel coordinates the Gibbs kernel would underflow to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError

MASS_TOLERANCE = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PixelGrid:
    """Row-major lattice of pixel centers scaled into [0, 1]^2."""

    width: int
    height: int
    coordinates: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, width: int, height: int) -> "PixelGrid":
        if width < 1 or height < 1:
            raise UsageError(f"grid dimensions must be positive, got {width}x{height}")
        scale = max(width, height) - 1
        if scale == 0:
            scale = 1
        rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        coords = np.stack([rows.ravel(), cols.ravel()], axis=1) / float(scale)
        return cls(width=width, height=height, coordinates=_readonly(coords))

    @property
    def size(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class GrayImage:
    """Flat row-major grayscale image with nonnegative intensities."""

    width: int
    height: int
    intensities: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _readonly(self.intensities)
        if vals.ndim != 1 or vals.size != self.width * self.height:
            raise UsageError(
                f"expected {self.width * self.height} intensities, got shape {vals.shape}"
            )
        if np.any(vals < 0):
            raise DataError("negative intensity in grayscale image")
        object.__setattr__(self, "intensities", vals)

    @property
    def total_mass(self) -> float:
        return float(self.intensities.sum())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Normalized weights over (a subset of) a pixel grid.

    ``indices`` is None for a measure supported on the full grid; a pruned
    measure keeps only its positive atoms and records their grid indices so
    ground-cost rows can be gathered.
    """

    weights: np.ndarray = field(repr=False)
    support: PixelGrid
    mass_original: float
    indices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        w = _readonly(self.weights)
        object.__setattr__(self, "weights", w)
        if self.indices is not None:
            idx = np.ascontiguousarray(self.indices, dtype=np.intp)
            idx.flags.writeable = False
            object.__setattr__(self, "indices", idx)
            if idx.size != w.size:
                raise UsageError("indices and weights length mismatch")
        elif w.size != self.support.size:
            raise UsageError(
                f"weights length {w.size} does not match grid size {self.support.size}"
            )
        if np.any(w < 0):
            raise DataError("negative weight in measure")
        total = float(w.sum())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise DataError(f"weights sum to {total!r}, expected 1 within {MASS_TOLERANCE}")

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def grid_indices(self) -> np.ndarray:
        if self.indices is not None:
            return self.indices
        return np.arange(self.support.size)

    def prune(self) -> "DiscreteMeasure":
        """Drop zero-weight atoms; the transport objective is unchanged."""
        if self.indices is not None:
            keep = self.weights > 0
            if keep.all():
                return self
            return DiscreteMeasure(
                weights=self.weights[keep],
                support=self.support,
                mass_original=self.mass_original,
                indices=self.indices[keep],
            )
        keep = np.flatnonzero(self.weights > 0)
        if keep.size == self.weights.size:
            return DiscreteMeasure(
                weights=self.weights,
                support=self.support,
                mass_original=self.mass_original,
                indices=keep,
            )
        return DiscreteMeasure(
            weights=self.weights[keep],
            support=self.support,
            mass_original=self.mass_original,
            indices=keep,
        )

    def intensity_vector(self) -> np.ndarray:
        """Raw image vector on the full grid: weights scaled back by the original mass."""
        if self.indices is None:
            return self.weights * self.mass_original
        full = np.zeros(self.support.size)
        full[self.indices] = self.weights * self.mass_original
        return full


@dataclass(frozen=True)
class GroundCost:
    """Squared Euclidean distances between the points of two grids."""

    entries: np.ndarray = field(repr=False)
    metric_power: int = 2

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def image_to_measure(img: GrayImage, grid: PixelGrid, prune: bool = False) -> DiscreteMeasure:
    """Normalize an image's intensities into a probability measure on the grid."""
    if (img.width, img.height) != (grid.width, grid.height):
        raise UsageError(
            f"image {img.width}x{img.height} does not match grid {grid.width}x{grid.height}"
        )
    total = img.total_mass
    if total <= 0:
        raise DataError("zero-mass image cannot be normalized to a measure")
    measure = DiscreteMeasure(
        weights=img.intensities / total,
        support=grid,
        mass_original=total,
    )
    return measure.prune() if prune else measure


def build_ground_cost(grid_a: PixelGrid, grid_b: PixelGrid) -> GroundCost:
    """Pairwise squared Euclidean distances between two grids' points."""
    if grid_a.size == 0 or grid_b.size == 0:
        raise UsageError("grids must be non-empty")
    diff = grid_a.coordinates[:, None, :] - grid_b.coordinates[None, :, :]
    return GroundCost(entries=np.einsum("ijk,ijk->ij", diff, diff))
