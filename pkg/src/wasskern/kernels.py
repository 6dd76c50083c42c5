"""Squared exponential Gram matrices over transport or Euclidean distances.

Three kinds are supported: exp(-W/(2 sigma^2)) on regularized squared
Wasserstein distances between normalized measures, the same reweighted by
the two images' total ink masses, and the classical Gaussian RBF on raw
intensity vectors. Assembly runs on a squared-distance matrix, so one
expensive transport computation serves every bandwidth in a validation
sweep.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .measure import DiscreteMeasure, GroundCost
from .transport import PairwiseReport, SinkhornConfig, pairwise_distances, sinkhorn_distance


class KernelKind(enum.Enum):
    WASSERSTEIN_EXP = "wasserstein_exp"
    REWEIGHTED_WASSERSTEIN_EXP = "reweighted_wasserstein_exp"
    EUCLIDEAN_RBF = "euclidean_rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    sigma: float
    sinkhorn: SinkhornConfig = SinkhornConfig()

    def __post_init__(self):
        if self.sigma <= 0:
            raise UsageError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray = field(repr=False)
    spec: KernelSpec
    diagonal_convention: bool = True

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.float64)
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def exponential_kernel_matrix(sq_distances: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / (2 sigma^2)) elementwise on a squared-distance matrix."""
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    return np.exp(sq_distances / (-2.0 * sigma * sigma))


def squared_euclidean_distances(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared Euclidean distances between row vectors."""
    y = x if y is None else y
    sq = (
        (x * x).sum(axis=1)[:, None]
        + (y * y).sum(axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return np.maximum(sq, 0.0)


def gram_from_distances(
    sq_distances: np.ndarray,
    spec: KernelSpec,
    masses: np.ndarray | None = None,
) -> GramMatrix:
    """Assemble a Gram matrix from a symmetric squared-distance matrix.

    The matrix is expected to carry the zero-diagonal convention already
    (self-distances recorded as zero). For the reweighted kind, ``masses``
    holds each image's total ink before normalization.
    """
    entries = exponential_kernel_matrix(sq_distances, spec.sigma)
    if spec.kind is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
        if masses is None:
            raise UsageError("reweighted kernel needs the original image masses")
        entries = entries * np.outer(masses, masses)
    return GramMatrix(entries=entries, spec=spec)


def cross_from_distances(
    sq_distances: np.ndarray,
    spec: KernelSpec,
    masses_rows: np.ndarray | None = None,
    masses_cols: np.ndarray | None = None,
) -> np.ndarray:
    entries = exponential_kernel_matrix(sq_distances, spec.sigma)
    if spec.kind is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
        if masses_rows is None or masses_cols is None:
            raise UsageError("reweighted kernel needs the original image masses")
        entries = entries * np.outer(masses_rows, masses_cols)
    return entries


def kernel_value(
    x: DiscreteMeasure,
    y: DiscreteMeasure,
    spec: KernelSpec,
    cost: GroundCost,
) -> float:
    """Single kernel evaluation between two measures."""
    if spec.kind is KernelKind.EUCLIDEAN_RBF:
        u = x.intensity_vector()
        v = y.intensity_vector()
        d2 = float(((u - v) ** 2).sum())
        return float(np.exp(d2 / (-2.0 * spec.sigma**2)))
    plan = sinkhorn_distance(x, y, cost, spec.sinkhorn)
    value = float(np.exp(plan.objective / (-2.0 * spec.sigma**2)))
    if spec.kind is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
        value *= x.mass_original * y.mass_original
    return value


def _masses(measures: list[DiscreteMeasure]) -> np.ndarray:
    return np.array([m.mass_original for m in measures])


def _intensity_rows(measures: list[DiscreteMeasure]) -> np.ndarray:
    return np.stack([m.intensity_vector() for m in measures])


def gram(
    train: list[DiscreteMeasure],
    spec: KernelSpec,
    cost: GroundCost,
    jobs: int = 1,
) -> tuple[GramMatrix, PairwiseReport | None]:
    """Full symmetric Gram matrix over a training set.

    Self-distances are recorded as zero before exponentiation, so the
    diagonal is exactly one for the plain kinds. Any transport pair that
    failed to converge is flagged in the returned report; its value is
    still used.
    """
    if not train:
        raise UsageError("training set must be non-empty")
    if spec.kind is KernelKind.EUCLIDEAN_RBF:
        sq = squared_euclidean_distances(_intensity_rows(train))
        np.fill_diagonal(sq, 0.0)
        return gram_from_distances(sq, spec), None
    report = pairwise_distances(train, train, cost, spec.sinkhorn, jobs=jobs)
    masses = _masses(train) if spec.kind is KernelKind.REWEIGHTED_WASSERSTEIN_EXP else None
    return gram_from_distances(report.values, spec, masses), report


def cross_gram(
    test: list[DiscreteMeasure],
    train: list[DiscreteMeasure],
    spec: KernelSpec,
    cost: GroundCost,
    jobs: int = 1,
) -> tuple[np.ndarray, PairwiseReport | None]:
    """Kernel evaluations of test points against training points.

    No diagonal convention applies: the two lists are treated as distinct
    points even if they coincide.
    """
    if not train:
        raise UsageError("training set must be non-empty")
    if spec.kind is KernelKind.EUCLIDEAN_RBF:
        sq = squared_euclidean_distances(_intensity_rows(test), _intensity_rows(train))
        return exponential_kernel_matrix(sq, spec.sigma), None
    report = pairwise_distances(test, list(train), cost, spec.sinkhorn, jobs=jobs)
    if spec.kind is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
        return (
            cross_from_distances(report.values, spec, _masses(test), _masses(train)),
            report,
        )
    return exponential_kernel_matrix(report.values, spec.sigma), report
