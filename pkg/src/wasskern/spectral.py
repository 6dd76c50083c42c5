"""Spectral truncation of Gram matrices and approximate feature maps.

An indefinite exponential Gram matrix is replaced by the positive part of
its eigendecomposition: keeping the eigenpairs above a small threshold
yields a positive semi-definite matrix, and the same eigenpairs define a
finite-dimensional feature map that extends to unseen points through their
kernel evaluations against the training set. The bandwidth scan utilities
locate the empirical transition below which the matrix is PSD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UsageError
from .kernels import GramMatrix, KernelSpec, cross_gram, exponential_kernel_matrix
from .measure import DiscreteMeasure, GroundCost

SYMMETRY_TOLERANCE = 1e-10
DEFAULT_EIGENVALUE_THRESHOLD = 1e-6


def _as_matrix(K: GramMatrix | np.ndarray) -> np.ndarray:
    return K.entries if isinstance(K, GramMatrix) else np.asarray(K, dtype=np.float64)


@dataclass(frozen=True)
class EigenSystem:
    """Full symmetric eigendecomposition, eigenvalues descending."""

    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def eigendecompose(K: GramMatrix | np.ndarray) -> EigenSystem:
    mat = _as_matrix(K)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise UsageError(f"expected a square matrix, got shape {mat.shape}")
    asym = np.abs(mat - mat.T).max() if mat.size else 0.0
    if asym > SYMMETRY_TOLERANCE:
        raise UsageError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    values, vectors = np.linalg.eigh(mat)
    order = np.argsort(values)[::-1]
    return EigenSystem(eigenvalues=values[order], eigenvectors=vectors[:, order])


@dataclass(frozen=True)
class FeatureMap:
    """Top positive eigenpairs of a training Gram matrix.

    Out-of-sample feature vectors are built from kernel evaluations against
    the map's training set, so the training measures and kernel spec travel
    with the map when those evaluations are needed.
    """

    eigenvalues: np.ndarray = field(repr=False)  # (ell,), all > threshold
    eigenvectors: np.ndarray = field(repr=False)  # (N, ell), orthonormal columns
    threshold: float
    train: list[DiscreteMeasure] | None = None
    spec: KernelSpec | None = None

    @property
    def ell(self) -> int:
        return self.eigenvalues.size

    @property
    def train_size(self) -> int:
        return self.eigenvectors.shape[0]

    def train_features(self) -> np.ndarray:
        """Feature vectors of the map's own training points, rows of shape (ell,)."""
        return self.eigenvectors * np.sqrt(self.eigenvalues)

    def truncated_gram(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T

    def features_from_kernel_columns(self, kernel_columns: np.ndarray) -> np.ndarray:
        """Feature vectors for points given their kernel row against the training set."""
        cols = np.atleast_2d(kernel_columns)
        if cols.shape[1] != self.train_size:
            raise UsageError(
                f"kernel columns have length {cols.shape[1]}, expected {self.train_size}"
            )
        return (cols @ self.eigenvectors) / np.sqrt(self.eigenvalues)


def truncate(
    sys: EigenSystem,
    threshold: float = DEFAULT_EIGENVALUE_THRESHOLD,
    max_components: int | None = None,
    train: list[DiscreteMeasure] | None = None,
    spec: KernelSpec | None = None,
) -> FeatureMap:
    """Retain the eigenpairs strictly above the threshold.

    ``max_components`` optionally caps the count at the leading components,
    for sweeps over the feature dimension.
    """
    if threshold <= 0:
        raise UsageError("threshold must be positive")
    keep = int((sys.eigenvalues > threshold).sum())
    if keep == 0:
        raise NumericalError(
            f"degenerate kernel: no eigenvalue exceeds threshold {threshold}"
        )
    if max_components is not None:
        keep = min(keep, max_components)
    return FeatureMap(
        eigenvalues=sys.eigenvalues[:keep],
        eigenvectors=sys.eigenvectors[:, :keep],
        threshold=threshold,
        train=train,
        spec=spec,
    )


def features_of(fm: FeatureMap, x: DiscreteMeasure, cost: GroundCost) -> np.ndarray:
    """Feature vector of an arbitrary point via kernel evaluations (fresh transport solves)."""
    if fm.train is None or fm.spec is None:
        raise UsageError("feature map carries no training set handle")
    columns, _ = cross_gram([x], fm.train, fm.spec, cost)
    return fm.features_from_kernel_columns(columns)[0]


def lambda_min_scan(
    sq_distances: np.ndarray, sigmas: list[float] | np.ndarray
) -> list[tuple[float, float]]:
    """Minimum eigenvalue of the exponential kernel matrix at each bandwidth."""
    D = np.asarray(sq_distances, dtype=np.float64)
    if np.abs(D - D.T).max() > SYMMETRY_TOLERANCE or np.abs(np.diag(D)).max() > 0:
        raise UsageError("squared-distance matrix must be symmetric with zero diagonal")
    out = []
    for sigma in sigmas:
        if sigma <= 0:
            raise UsageError("bandwidths must be positive")
        K = exponential_kernel_matrix(D, float(sigma))
        out.append((float(sigma), float(np.linalg.eigvalsh(K)[0])))
    return out


def reference_bandwidths(sq_distances: np.ndarray) -> tuple[float, float]:
    """Bandwidths far below and above the data scale.

    At the small one the kernel matrix is numerically the identity; at the
    large one it is numerically the all-ones matrix.
    """
    D = np.asarray(sq_distances, dtype=np.float64)
    positive = D[D > 0]
    if positive.size == 0:
        raise UsageError("distance matrix has no positive entries")
    return 1e-2 * float(np.sqrt(positive.min())), 1e3 * float(np.sqrt(D.max()))


@dataclass(frozen=True)
class SigmaPsdResult:
    sigma: float
    lambda_min: float
    bracket: tuple[float, float]
    transition_found: bool
    note: str = ""


def find_sigma_psd(
    sq_distances: np.ndarray,
    sigma_hi: float,
    tol: float = 1e-3,
    max_steps: int = 40,
) -> SigmaPsdResult:
    """Empirical estimate of the largest PSD bandwidth by geometric bisection.

    The PSD test is lambda_min >= -1e-10 * N, an eigensolver-noise floor.
    This locates a transition for this dataset only; it certifies nothing
    about unseen data.
    """
    D = np.asarray(sq_distances, dtype=np.float64)
    n = D.shape[0]
    floor = -1e-10 * n

    def lam(sigma: float) -> float:
        return float(np.linalg.eigvalsh(exponential_kernel_matrix(D, sigma))[0])

    lo, _ = reference_bandwidths(D)
    lo = min(lo, sigma_hi)
    lam_lo = lam(lo)
    if lam_lo < floor:
        raise NumericalError(
            f"kernel matrix is not PSD even at bandwidth {lo:.3e} (lambda_min {lam_lo:.3e})"
        )
    lam_hi = lam(sigma_hi)
    if lam_hi >= floor:
        return SigmaPsdResult(
            sigma=sigma_hi,
            lambda_min=lam_hi,
            bracket=(lo, sigma_hi),
            transition_found=False,
            note="no transition found: PSD across the whole bracket",
        )
    hi = sigma_hi
    for _ in range(max_steps):
        if hi / lo <= 1.0 + tol:
            break
        mid = float(np.sqrt(lo * hi))
        lam_mid = lam(mid)
        if lam_mid >= floor:
            lo, lam_lo = mid, lam_mid
        else:
            hi = mid
    return SigmaPsdResult(
        sigma=lo,
        lambda_min=lam_lo,
        bracket=(lo, hi),
        transition_found=True,
    )
