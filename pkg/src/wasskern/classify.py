"""LS-SVM and kNN classifiers over transport or Euclidean kernels.

Binary least-squares SVMs come in two forms. The primal form works in an
explicit feature space and solves the (ell+1) x (ell+1) normal system

    [ sum phi phi^T + (N/gamma) I   sum phi ] [w]   [ sum y phi ]
    [ sum phi^T                     N       ] [b] = [ sum y     ]

The dual form works directly on a (possibly indefinite) kernel matrix and
solves the bordered (N+1) x (N+1) system

    [ K + (N/gamma) I   1 ] [alpha]   [y]
    [ 1^T               0 ] [b    ] = [0].

Multiclass problems train one binary model per class pair and decode by
minimum Hamming distance between the pair outputs and each class's
codeword (+1 where the class is the pair's first member, -1 where it is
the second).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, UsageError
from .kernels import (
    GramMatrix,
    KernelKind,
    KernelSpec,
    cross_from_distances,
    exponential_kernel_matrix,
    gram_from_distances,
    squared_euclidean_distances,
)
from .spectral import DEFAULT_EIGENVALUE_THRESHOLD, FeatureMap, eigendecompose, truncate

RESIDUAL_TOLERANCE = 1e-8


class Method(enum.Enum):
    CORE = "core"
    CORE_OOS = "core-oos"
    INDEFINITE = "indefinite"
    RBF = "rbf"
    WASS_KNN = "wass-knn"
    L2_KNN = "l2-knn"


LSSVM_METHODS = (Method.CORE, Method.CORE_OOS, Method.INDEFINITE, Method.RBF)
KNN_METHODS = (Method.WASS_KNN, Method.L2_KNN)


def _check_binary_labels(labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise UsageError("labels must be +1 or -1")
    return y


def _solve_checked(A: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            # conditioning is judged by the residual check below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(A, rhs, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{context}: singular system ({exc}); try perturbing gamma") from exc
    scale = max(np.abs(rhs).max(), np.finfo(np.float64).tiny)
    residual = np.abs(A @ sol - rhs).max()
    if not np.isfinite(sol).all() or residual > RESIDUAL_TOLERANCE * scale:
        cond = np.linalg.cond(A)
        raise NumericalError(
            f"{context}: residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}*|rhs| "
            f"(condition number {cond:.3e}); try perturbing gamma"
        )
    return sol


@dataclass(frozen=True)
class LssvmPrimalModel:
    weights: np.ndarray = field(repr=False)
    bias: float
    gamma: float
    residual: float

    def decision_values(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.weights + self.bias


@dataclass(frozen=True)
class LssvmDualModel:
    alpha: np.ndarray = field(repr=False)
    bias: float
    gamma: float
    residual: float

    def decision_values(self, kernel_columns: np.ndarray) -> np.ndarray:
        return np.atleast_2d(kernel_columns) @ self.alpha + self.bias


def train_primal(features: np.ndarray, labels: np.ndarray, gamma: float) -> LssvmPrimalModel:
    if gamma <= 0:
        raise UsageError(f"gamma must be positive, got {gamma}")
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _check_binary_labels(labels)
    n, ell = F.shape
    if y.size != n:
        raise UsageError("labels length does not match feature rows")
    A = np.empty((ell + 1, ell + 1))
    A[:ell, :ell] = F.T @ F + (n / gamma) * np.eye(ell)
    col_sums = F.sum(axis=0)
    A[:ell, ell] = col_sums
    A[ell, :ell] = col_sums
    A[ell, ell] = n
    rhs = np.concatenate([F.T @ y, [y.sum()]])
    sol = _solve_checked(A, rhs, "primal LS-SVM")
    residual = float(np.abs(A @ sol - rhs).max())
    return LssvmPrimalModel(weights=sol[:ell], bias=float(sol[ell]), gamma=gamma, residual=residual)


def train_dual(
    K: GramMatrix | np.ndarray, labels: np.ndarray, gamma: float
) -> LssvmDualModel:
    if gamma <= 0:
        raise UsageError(f"gamma must be positive, got {gamma}")
    mat = K.entries if isinstance(K, GramMatrix) else np.asarray(K, dtype=np.float64)
    y = _check_binary_labels(labels)
    n = y.size
    if mat.shape != (n, n):
        raise UsageError(f"kernel matrix shape {mat.shape} does not match {n} labels")
    A = np.empty((n + 1, n + 1))
    A[:n, :n] = mat + (n / gamma) * np.eye(n)
    A[:n, n] = 1.0
    A[n, :n] = 1.0
    A[n, n] = 0.0
    rhs = np.concatenate([y, [0.0]])
    sol = _solve_checked(A, rhs, "dual LS-SVM")
    residual = float(np.abs(A @ sol - rhs).max())
    return LssvmDualModel(alpha=sol[:n], bias=float(sol[n]), gamma=gamma, residual=residual)


def predict_binary(model, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw scores and their signs; a zero score maps to +1."""
    scores = model.decision_values(inputs)
    return scores, np.where(scores >= 0, 1, -1).astype(np.int64)


# ---------------------------------------------------------------------------
# One-versus-one ensembles


@dataclass(frozen=True)
class OvoParams:
    method: Method
    sigma: float
    gamma: float
    kernel: KernelKind = KernelKind.WASSERSTEIN_EXP
    eigen_threshold: float = DEFAULT_EIGENVALUE_THRESHOLD
    core_size: int | None = None
    epsilon: float = 0.4  # recorded for provenance; distances arrive precomputed


@dataclass(frozen=True)
class TrainingData:
    """Precomputed per-split artifacts the classifiers train on.

    ``sq_distances`` is the symmetric zero-diagonal matrix of regularized
    squared transport distances (kernel methods); ``intensities`` holds raw
    image vectors (RBF and Euclidean kNN); ``masses`` the per-image total
    ink (reweighted kernel).
    """

    labels: np.ndarray
    sq_distances: np.ndarray | None = None
    intensities: np.ndarray | None = None
    masses: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CrossData:
    """Cross artifacts of evaluation points against the training set."""

    sq_distances: np.ndarray | None = None  # (T, N) against full training set
    intensities: np.ndarray | None = None
    masses: np.ndarray | None = None


@dataclass(frozen=True)
class PairModel:
    first: int
    second: int
    indices: np.ndarray = field(repr=False)
    model: LssvmPrimalModel | LssvmDualModel = field(repr=False)


@dataclass(frozen=True)
class OvoEnsemble:
    classes: np.ndarray
    params: OvoParams
    pair_models: tuple[PairModel, ...]
    feature_map: FeatureMap | None = None
    core_indices: np.ndarray | None = None

    @property
    def n_pairs(self) -> int:
        return len(self.pair_models)

    def pair_scores(self, data: CrossData, train: TrainingData) -> np.ndarray:
        """Decision values of every pair model, shape (T, n_pairs)."""
        p = self.params
        if p.method in (Method.CORE, Method.CORE_OOS):
            columns = _test_kernel_columns(p, data, train)
            if p.method is Method.CORE_OOS:
                columns = columns[:, self.core_indices]
            features = self.feature_map.features_from_kernel_columns(columns)
            return np.column_stack(
                [pm.model.decision_values(features) for pm in self.pair_models]
            )
        columns = _test_kernel_columns(p, data, train)
        return np.column_stack(
            [pm.model.decision_values(columns[:, pm.indices]) for pm in self.pair_models]
        )

    def predict(self, data: CrossData, train: TrainingData) -> np.ndarray:
        signs = np.where(self.pair_scores(data, train) >= 0, 1, -1)
        return self.decode_signs(signs)

    def decode_signs(self, signs: np.ndarray) -> np.ndarray:
        """Minimum-Hamming-distance decoding of pair outputs to class labels."""
        signs = np.atleast_2d(signs)
        n_classes = self.classes.size
        # codebook[c, p]: +1 if class c is the pair's first member, -1 if
        # second, 0 if not involved (not counted as disagreement).
        codebook = np.zeros((n_classes, self.n_pairs))
        for pos, pm in enumerate(self.pair_models):
            codebook[pm.first, pos] = 1.0
            codebook[pm.second, pos] = -1.0
        involved = codebook != 0
        disagreements = ((signs[:, None, :] != codebook[None, :, :]) & involved).sum(axis=2)
        return self.classes[np.argmin(disagreements, axis=1)]


def _training_gram(p: OvoParams, train: TrainingData) -> np.ndarray:
    if p.method is Method.RBF:
        if train.intensities is None:
            raise UsageError("RBF training needs raw intensity vectors")
        sq = squared_euclidean_distances(train.intensities)
        np.fill_diagonal(sq, 0.0)
        return exponential_kernel_matrix(sq, p.sigma)
    if train.sq_distances is None:
        raise UsageError("kernel methods need a precomputed transport distance matrix")
    masses = train.masses if p.kernel is KernelKind.REWEIGHTED_WASSERSTEIN_EXP else None
    spec = KernelSpec(kind=p.kernel, sigma=p.sigma)
    return gram_from_distances(train.sq_distances, spec, masses).entries


def _test_kernel_columns(p: OvoParams, data: CrossData, train: TrainingData) -> np.ndarray:
    if p.method is Method.RBF:
        if data.intensities is None or train.intensities is None:
            raise UsageError("RBF prediction needs raw intensity vectors")
        sq = squared_euclidean_distances(data.intensities, train.intensities)
        return exponential_kernel_matrix(sq, p.sigma)
    if data.sq_distances is None:
        raise UsageError("kernel methods need precomputed cross distances")
    if p.kernel is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
        spec = KernelSpec(kind=p.kernel, sigma=p.sigma)
        return cross_from_distances(data.sq_distances, spec, data.masses, train.masses)
    return exponential_kernel_matrix(data.sq_distances, p.sigma)


def class_pairs(classes: np.ndarray) -> list[tuple[int, int]]:
    c = classes.size
    return [(i, j) for i in range(c) for j in range(i + 1, c)]


def train_ovo(train: TrainingData, params: OvoParams) -> OvoEnsemble:
    """Train one binary LS-SVM per class pair.

    Core methods build a feature map from the truncated spectrum (on the
    full training set, or on the leading ``core_size`` points with the
    out-of-sample extension covering the rest) and solve primal systems;
    the indefinite and RBF methods solve dual systems on the raw Gram
    matrix restricted to each pair's samples.
    """
    if params.method not in LSSVM_METHODS:
        raise UsageError(f"train_ovo does not handle {params.method}")
    classes = np.unique(train.labels)
    if classes.size < 2:
        raise UsageError("need at least two classes")

    feature_map = None
    core_indices = None
    features = None
    if params.method in (Method.CORE, Method.CORE_OOS):
        gram_full = _training_gram(params, train)
        if params.method is Method.CORE:
            feature_map = truncate(eigendecompose(gram_full), params.eigen_threshold)
            features = feature_map.train_features()
        else:
            if not params.core_size or params.core_size < 1:
                raise UsageError("core-oos needs a positive core_size")
            if params.core_size > train.size:
                raise UsageError("core_size exceeds training size")
            core_indices = np.arange(params.core_size)
            core_gram = gram_full[np.ix_(core_indices, core_indices)]
            feature_map = truncate(eigendecompose(core_gram), params.eigen_threshold)
            features = np.empty((train.size, feature_map.ell))
            features[core_indices] = feature_map.train_features()
            rest = np.arange(params.core_size, train.size)
            if rest.size:
                features[rest] = feature_map.features_from_kernel_columns(
                    gram_full[np.ix_(rest, core_indices)]
                )
        gram_full = None
    else:
        gram_full = _training_gram(params, train)

    pair_models = []
    for ci, cj in class_pairs(classes):
        mask_i = train.labels == classes[ci]
        mask_j = train.labels == classes[cj]
        idx = np.flatnonzero(mask_i | mask_j)
        y = np.where(train.labels[idx] == classes[ci], 1.0, -1.0)
        if params.method in (Method.CORE, Method.CORE_OOS):
            model = train_primal(features[idx], y, params.gamma)
        else:
            model = train_dual(gram_full[np.ix_(idx, idx)], y, params.gamma)
        pair_models.append(PairModel(first=ci, second=cj, indices=idx, model=model))

    return OvoEnsemble(
        classes=classes,
        params=params,
        pair_models=tuple(pair_models),
        feature_map=feature_map,
        core_indices=core_indices,
    )


def predict_ovo(ens: OvoEnsemble, data: CrossData, train: TrainingData) -> np.ndarray:
    return ens.predict(data, train)


# ---------------------------------------------------------------------------
# k nearest neighbors


@dataclass(frozen=True)
class KnnModel:
    k: int
    method: Method  # WASS_KNN or L2_KNN
    labels: np.ndarray

    def __post_init__(self):
        if self.k < 1 or self.k > self.labels.size:
            raise UsageError(f"k must be in [1, {self.labels.size}], got {self.k}")


def knn_predict_rows(model: KnnModel, distance_rows: np.ndarray) -> np.ndarray:
    """Majority vote over the k nearest training points, one row per query.

    Distance ties resolve by training index; vote ties by the smallest
    summed distance among the tied classes inside the neighborhood, then by
    the smallest class label.
    """
    rows = np.atleast_2d(distance_rows)
    if rows.shape[1] != model.labels.size:
        raise UsageError("distance rows do not match training size")
    out = np.empty(rows.shape[0], dtype=model.labels.dtype)
    n = model.labels.size
    for r, dist in enumerate(rows):
        order = np.lexsort((np.arange(n), dist))[: model.k]
        neighbor_labels = model.labels[order]
        neighbor_dist = dist[order]
        votes: dict = {}
        sums: dict = {}
        for lab, d in zip(neighbor_labels.tolist(), neighbor_dist.tolist()):
            votes[lab] = votes.get(lab, 0) + 1
            sums[lab] = sums.get(lab, 0.0) + d
        best_votes = max(votes.values())
        tied = [lab for lab, v in votes.items() if v == best_votes]
        tied.sort(key=lambda lab: (sums[lab], lab))
        out[r] = tied[0]
    return out


# ---------------------------------------------------------------------------
# Hyperparameter validation


@dataclass(frozen=True)
class ValidationResult:
    sigma: float | None
    gamma: float | None
    k: int | None
    error: float
    table: tuple = ()  # (params..., error) per grid point, in evaluation order


def misclassification(predicted: np.ndarray, actual: np.ndarray) -> float:
    return float(np.mean(predicted != actual))


def validate_lssvm(
    train: TrainingData,
    val: CrossData,
    val_labels: np.ndarray,
    params_base: OvoParams,
    sigma_grid: np.ndarray,
    gamma_grid: np.ndarray,
) -> ValidationResult:
    """Exhaustive grid search; ties prefer the larger sigma, then smaller gamma."""
    if len(sigma_grid) == 0 or len(gamma_grid) == 0:
        raise UsageError("validation grids must be non-empty")
    best = None
    table = []
    for sigma in sigma_grid:
        for gamma in gamma_grid:
            p = OvoParams(
                method=params_base.method,
                sigma=float(sigma),
                gamma=float(gamma),
                kernel=params_base.kernel,
                eigen_threshold=params_base.eigen_threshold,
                core_size=params_base.core_size,
                epsilon=params_base.epsilon,
            )
            ens = train_ovo(train, p)
            err = misclassification(ens.predict(val, train), val_labels)
            table.append((float(sigma), float(gamma), err))
            key = (err, -float(sigma), float(gamma))
            if best is None or key < best[0]:
                best = (key, float(sigma), float(gamma), err)
    return ValidationResult(
        sigma=best[1], gamma=best[2], k=None, error=best[3], table=tuple(table)
    )


def validate_knn(
    train_labels: np.ndarray,
    val_distance_rows: np.ndarray,
    val_labels: np.ndarray,
    method: Method,
    k_grid: list[int],
) -> ValidationResult:
    """Grid search over k; ties prefer the larger (smoother) k."""
    if len(k_grid) == 0:
        raise UsageError("k grid must be non-empty")
    best = None
    table = []
    for k in k_grid:
        model = KnnModel(k=int(k), method=method, labels=train_labels)
        err = misclassification(knn_predict_rows(model, val_distance_rows), val_labels)
        table.append((int(k), err))
        key = (err, -int(k))
        if best is None or key < best[0]:
            best = (key, int(k), err)
    return ValidationResult(sigma=None, gamma=None, k=best[1], error=best[2], table=tuple(table))


def default_sigma_grid(sq_distances: np.ndarray, points: int = 13) -> np.ndarray:
    """Log-spaced bandwidths spanning [0.1, 10] times the median pairwise distance."""
    positive = sq_distances[sq_distances > 0]
    if positive.size == 0:
        raise UsageError("distance matrix has no positive entries")
    med = float(np.sqrt(np.median(positive)))
    return np.geomspace(0.1 * med, 10.0 * med, points)


def default_gamma_grid(points: int = 13) -> np.ndarray:
    return np.geomspace(1e-2, 1e4, points)
