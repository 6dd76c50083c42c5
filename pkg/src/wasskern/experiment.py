"""End-to-end experiment orchestration with disk-backed distance caches.

A repetition is: draw balanced splits for the seed, compute (or reuse) the
pairwise transport distance matrices, grid-search the hyperparameters on
the validation split, train the chosen model, and score the test split.
Distance matrices are cached keyed by a hash of the exact image bytes plus
the solver settings, so bandwidth sweeps and repeated runs never recompute
transport plans. Result tables carry no timestamps or wall-clock values
(those go to a separate timings file), which keeps repeated runs of the
same configuration byte identical.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import (
    KNN_METHODS,
    KnnModel,
    LssvmDualModel,
    LssvmPrimalModel,
    Method,
    OvoEnsemble,
    OvoParams,
    PairModel,
    CrossData,
    TrainingData,
    default_gamma_grid,
    default_sigma_grid,
    knn_predict_rows,
    misclassification,
    train_ovo,
    validate_knn,
    validate_lssvm,
)
from .config import ExperimentConfig
from .container import (
    Container,
    MatrixKind,
    pack_eigenpairs,
    read_container,
    unpack_eigenpairs,
    write_container,
)
from .data import LabeledImageSet, SplitPlan, balanced_subsample
from .errors import DataError, UsageError, WasskernError
from .kernels import KernelKind, exponential_kernel_matrix, squared_euclidean_distances
from .measure import GroundCost, build_ground_cost
from .spectral import FeatureMap
from .transport import ObjectiveKind, SinkhornConfig, pairwise_distances

WASSERSTEIN_METHODS = (Method.CORE, Method.CORE_OOS, Method.INDEFINITE, Method.WASS_KNN)


# ---------------------------------------------------------------------------
# Distance caches


def _digest_arrays(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(str(part).encode())
        h.update(b"|")
    return h.hexdigest()


def pairwise_cache_key(
    rows: LabeledImageSet,
    cols: LabeledImageSet | None,
    cfg: SinkhornConfig,
    prune: bool,
) -> str:
    parts = [rows.images, rows.width, rows.height]
    parts += ["sym"] if cols is None else [cols.images, cols.width, cols.height]
    parts += [cfg.epsilon, cfg.max_iterations, cfg.marginal_tolerance, cfg.objective_kind, prune]
    return _digest_arrays(*parts)


def cached_transport_distances(
    cache_dir: Path,
    rows: LabeledImageSet,
    cols: LabeledImageSet | None,
    cost: GroundCost,
    cfg: SinkhornConfig,
    prune: bool,
    jobs: int = 1,
) -> np.ndarray:
    """Pairwise regularized squared distances, cached on disk.

    ``cols=None`` means the symmetric matrix of ``rows`` with itself (zero
    diagonal convention applied). The cache file stores the dataset hash;
    a file whose hash disagrees with its name is refused rather than
    silently reused.
    """
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = pairwise_cache_key(rows, cols, cfg, prune)
    path = cache_dir / f"dist_{key[:20]}.wskn"
    if path.exists():
        box = read_container(path)
        stored = box.section(b"HASH")
        if stored is None or stored.hex() != key:
            raise DataError(
                f"cache {path} does not match the requested dataset/settings "
                f"(stored hash {stored.hex() if stored else 'missing'}, expected {key}); "
                "delete the file to recompute"
            )
        return box.matrix
    grid = rows.grid()
    row_measures = rows.to_measures(grid, prune=prune)
    col_measures = row_measures if cols is None else cols.to_measures(grid, prune=prune)
    report = pairwise_distances(row_measures, col_measures, cost, cfg, jobs=jobs)
    write_container(
        path,
        Container(
            matrix=report.values,
            epsilon=cfg.epsilon,
            sigma=0.0,
            kind=MatrixKind.TRANSPORT_SQ_DISTANCE,
            sections=((b"HASH", bytes.fromhex(key)),),
        ),
    )
    return report.values


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class ResultRecord:
    method: str
    seed: int
    sigma: float | None
    gamma: float | None
    k: int | None
    ell: int | None
    lambda_min: float | None
    validation_error_pct: float
    test_error_pct: float
    seconds: float


@dataclass(frozen=True)
class RunFailure:
    seed: int
    stage: str
    message: str


@dataclass
class RunOutput:
    records: list[ResultRecord] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)
    sweep_rows: list[tuple[int, float, float]] = field(default_factory=list)

    def summary_row(self) -> tuple | None:
        if not self.records:
            return None
        errs = np.array([r.test_error_pct for r in self.records])
        vals = np.array([r.validation_error_pct for r in self.records])
        std = float(errs.std(ddof=1)) if errs.size > 1 else 0.0
        return (
            self.records[0].method,
            len(self.records),
            float(errs.mean()),
            std,
            float(errs.min()),
            float(vals.mean()),
        )


# ---------------------------------------------------------------------------
# One repetition


def run_repetition(
    cfg: ExperimentConfig,
    dataset: LabeledImageSet,
    seed: int,
    cache_dir: Path,
    train_size: int | None = None,
) -> tuple[ResultRecord, object]:
    """Run one seeded split end to end; returns the record and the trained model."""
    started = time.perf_counter()
    plan = SplitPlan(
        train_size=train_size or cfg.train_size,
        validation_size=cfg.validation_size,
        test_size=cfg.test_size,
        rng_seed=seed,
        core_size=cfg.core_size if cfg.method is Method.CORE_OOS else None,
    )
    train_set, val_set, test_set = balanced_subsample(dataset, plan)
    method = cfg.method

    needs_transport = method in WASSERSTEIN_METHODS
    grid = dataset.grid()
    sq_tt = sq_vt = sq_et = None
    masses_train = masses_val = masses_test = None
    if needs_transport:
        cost = build_ground_cost(grid, grid)
        sq_tt = cached_transport_distances(
            cache_dir, train_set, None, cost, cfg.sinkhorn, cfg.prune, cfg.jobs
        )
        sq_vt = cached_transport_distances(
            cache_dir, val_set, train_set, cost, cfg.sinkhorn, cfg.prune, cfg.jobs
        )
        sq_et = cached_transport_distances(
            cache_dir, test_set, train_set, cost, cfg.sinkhorn, cfg.prune, cfg.jobs
        )
        masses_train = train_set.images.sum(axis=1)
        masses_val = val_set.images.sum(axis=1)
        masses_test = test_set.images.sum(axis=1)

    train_data = TrainingData(
        labels=train_set.labels,
        sq_distances=sq_tt,
        intensities=train_set.images,
        masses=masses_train,
    )
    val_data = CrossData(
        sq_distances=sq_vt, intensities=val_set.images, masses=masses_val
    )
    test_data = CrossData(
        sq_distances=sq_et, intensities=test_set.images, masses=masses_test
    )

    ell = None
    lambda_min = None
    if method in KNN_METHODS:
        if method is Method.WASS_KNN:
            val_rows, test_rows = sq_vt, sq_et
        else:
            val_rows = squared_euclidean_distances(val_set.images, train_set.images)
            test_rows = squared_euclidean_distances(test_set.images, train_set.images)
        k_grid = [k for k in cfg.k_grid if k <= len(train_set)]
        if not k_grid:
            raise UsageError("no k in the grid is <= the training size")
        best = validate_knn(train_set.labels, val_rows, val_set.labels, method, k_grid)
        model = KnnModel(k=best.k, method=method, labels=train_set.labels)
        test_err = misclassification(knn_predict_rows(model, test_rows), test_set.labels)
        record = ResultRecord(
            method=method.value,
            seed=seed,
            sigma=None,
            gamma=None,
            k=best.k,
            ell=None,
            lambda_min=None,
            validation_error_pct=100.0 * best.error,
            test_error_pct=100.0 * test_err,
            seconds=time.perf_counter() - started,
        )
        return record, _KnnBundle(model=model, train_set=train_set, cfg=cfg)

    # LS-SVM methods
    if cfg.sigma_grid is not None:
        sigma_grid = np.array(cfg.sigma_grid, dtype=float)
    elif method is Method.RBF:
        sigma_grid = default_sigma_grid(squared_euclidean_distances(train_set.images))
    else:
        sigma_grid = default_sigma_grid(sq_tt)
    gamma_grid = (
        np.array(cfg.gamma_grid, dtype=float)
        if cfg.gamma_grid is not None
        else default_gamma_grid()
    )
    base = OvoParams(
        method=method,
        sigma=1.0,
        gamma=1.0,
        kernel=cfg.kernel if method is not Method.RBF else KernelKind.EUCLIDEAN_RBF,
        eigen_threshold=cfg.eigen_threshold,
        core_size=cfg.core_size if method is Method.CORE_OOS else None,
        epsilon=cfg.sinkhorn.epsilon,
    )
    best = validate_lssvm(train_data, val_data, val_set.labels, base, sigma_grid, gamma_grid)
    chosen = OvoParams(
        method=method,
        sigma=best.sigma,
        gamma=best.gamma,
        kernel=base.kernel,
        eigen_threshold=base.eigen_threshold,
        core_size=base.core_size,
        epsilon=base.epsilon,
    )
    ensemble = train_ovo(train_data, chosen)
    test_err = misclassification(ensemble.predict(test_data, train_data), test_set.labels)
    if ensemble.feature_map is not None:
        ell = ensemble.feature_map.ell
    if method is Method.RBF:
        sq = squared_euclidean_distances(train_set.images)
        np.fill_diagonal(sq, 0.0)
        lambda_min = float(np.linalg.eigvalsh(exponential_kernel_matrix(sq, best.sigma))[0])
    else:
        gram = exponential_kernel_matrix(sq_tt, best.sigma)
        if chosen.kernel is KernelKind.REWEIGHTED_WASSERSTEIN_EXP:
            gram = gram * np.outer(masses_train, masses_train)
        lambda_min = float(np.linalg.eigvalsh(gram)[0])

    record = ResultRecord(
        method=method.value,
        seed=seed,
        sigma=best.sigma,
        gamma=best.gamma,
        k=None,
        ell=ell,
        lambda_min=lambda_min,
        validation_error_pct=100.0 * best.error,
        test_error_pct=100.0 * test_err,
        seconds=time.perf_counter() - started,
    )
    return record, _OvoBundle(ensemble=ensemble, train_set=train_set, train_data=train_data, cfg=cfg)


def run_experiment(cfg: ExperimentConfig, cache_dir: Path | None = None) -> tuple[RunOutput, object]:
    """All repetitions plus the optional training-size sweep.

    Returns the output tables and the model trained in the last successful
    repetition (handy for persistence).
    """
    cfg.validate()
    dataset = cfg.load_dataset()
    cache_dir = cache_dir or (Path(cfg.output) / "cache")
    out = RunOutput()
    last_model = None
    for seed in cfg.seeds:
        try:
            record, model = run_repetition(cfg, dataset, seed, cache_dir)
            out.records.append(record)
            last_model = model
        except WasskernError as exc:
            out.failures.append(RunFailure(seed=seed, stage=type(exc).__name__, message=str(exc)))
    for size in cfg.sweep_sizes:
        errs = []
        for seed in cfg.seeds:
            try:
                record, _ = run_repetition(cfg, dataset, seed, cache_dir, train_size=size)
                errs.append(record.test_error_pct)
            except WasskernError as exc:
                out.failures.append(
                    RunFailure(seed=seed, stage=f"sweep[{size}]:{type(exc).__name__}", message=str(exc))
                )
        if errs:
            arr = np.array(errs)
            std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            out.sweep_rows.append((size, float(arr.mean()), std))
    return out, last_model


# ---------------------------------------------------------------------------
# Feature-map persistence


def save_feature_map(path: str | Path, fm: FeatureMap, gram: np.ndarray, epsilon: float, sigma: float, kind: MatrixKind = MatrixKind.GRAM_WASSERSTEIN) -> None:
    """Persist a feature map with its training Gram matrix."""
    write_container(
        Path(path),
        Container(
            matrix=gram,
            epsilon=epsilon,
            sigma=sigma,
            kind=kind,
            sections=((b"EIGP", pack_eigenpairs(fm.eigenvalues, fm.eigenvectors)),),
        ),
    )


def load_feature_map(path: str | Path) -> tuple[FeatureMap, Container]:
    box = read_container(path)
    eigp = box.section(b"EIGP")
    if eigp is None:
        raise DataError(f"{path}: no eigenpair section")
    vals, vecs = unpack_eigenpairs(eigp, box.matrix.shape[0])
    # the container does not carry the original cutoff; anything strictly
    # below the smallest retained eigenvalue is consistent
    threshold = float(np.nextafter(vals.min(), 0.0))
    fm = FeatureMap(eigenvalues=vals, eigenvectors=vecs, threshold=threshold)
    return fm, box


# ---------------------------------------------------------------------------
# Model persistence


_MODL = struct.Struct("<BBIdIdIIIBB")
_OBJECTIVE_CODES = {ObjectiveKind.TRANSPORT_COST: 0, ObjectiveKind.REGULARIZED: 1}


@dataclass(frozen=True)
class _OvoBundle:
    ensemble: OvoEnsemble
    train_set: LabeledImageSet
    train_data: TrainingData
    cfg: ExperimentConfig


@dataclass(frozen=True)
class _KnnBundle:
    model: KnnModel
    train_set: LabeledImageSet
    cfg: ExperimentConfig


_KERNEL_CODES = {
    KernelKind.WASSERSTEIN_EXP: 0,
    KernelKind.REWEIGHTED_WASSERSTEIN_EXP: 1,
    KernelKind.EUCLIDEAN_RBF: 2,
}
_METHOD_CODES = {m: i for i, m in enumerate(Method)}


def save_model(path: str | Path, bundle) -> None:
    """Persist a trained ensemble or kNN model with its training set."""
    cfg: ExperimentConfig = bundle.cfg
    train_set: LabeledImageSet = bundle.train_set
    sections: list[tuple[bytes, bytes]] = []
    if isinstance(bundle, _KnnBundle):
        method = bundle.model.method
        sigma = 0.0
        gamma = 0.0
        ell = 0
        k = bundle.model.k
        threshold = 0.0
        kernel_code = _KERNEL_CODES[cfg.kernel]
        classes = np.unique(train_set.labels)
    else:
        ens = bundle.ensemble
        method = ens.params.method
        sigma = ens.params.sigma
        gamma = ens.params.gamma
        ell = ens.feature_map.ell if ens.feature_map is not None else 0
        k = 0
        threshold = ens.params.eigen_threshold
        kernel_code = _KERNEL_CODES[ens.params.kernel]
        classes = ens.classes
    modl = _MODL.pack(
        _METHOD_CODES[method],
        kernel_code,
        classes.size,
        gamma,
        ell,
        threshold,
        k,
        train_set.width,
        train_set.height,
        1 if cfg.prune else 0,
        _OBJECTIVE_CODES[cfg.sinkhorn.objective_kind],
    ) + np.ascontiguousarray(classes, dtype="<i8").tobytes()
    sections.append((b"MODL", modl))
    sections.append((b"LABL", np.ascontiguousarray(train_set.labels, dtype="<i8").tobytes()))
    if not isinstance(bundle, _KnnBundle):
        ens = bundle.ensemble
        if ens.feature_map is not None:
            sections.append(
                (b"EIGP", pack_eigenpairs(ens.feature_map.eigenvalues, ens.feature_map.eigenvectors))
            )
        if ens.core_indices is not None:
            sections.append(
                (
                    b"CORE",
                    struct.pack("<I", ens.core_indices.size)
                    + np.ascontiguousarray(ens.core_indices, dtype="<u4").tobytes(),
                )
            )
        for pm in ens.pair_models:
            coef = pm.model.weights if isinstance(pm.model, LssvmPrimalModel) else pm.model.alpha
            head = struct.pack(
                "<IIIId", pm.first, pm.second, pm.indices.size, coef.size, pm.model.bias
            )
            body = (
                np.ascontiguousarray(pm.indices, dtype="<u4").tobytes()
                + np.ascontiguousarray(coef, dtype="<f8").tobytes()
            )
            sections.append((b"PAIR", head + body))
    write_container(
        Path(path),
        Container(
            matrix=train_set.images,
            epsilon=cfg.sinkhorn.epsilon,
            sigma=sigma,
            kind=MatrixKind.MODEL,
            sections=tuple(sections),
        ),
    )


@dataclass(frozen=True)
class LoadedModel:
    method: Method
    kernel: KernelKind
    sigma: float
    epsilon: float
    k: int
    prune: bool
    objective_kind: ObjectiveKind
    train_set: LabeledImageSet
    ensemble: OvoEnsemble | None
    knn: KnnModel | None

    def predict(self, images: LabeledImageSet, jobs: int = 1) -> np.ndarray:
        if len(images) == 0:
            return np.zeros(0, dtype=np.int64)
        if (images.width, images.height) != (self.train_set.width, self.train_set.height):
            raise UsageError(
                f"input grid {images.width}x{images.height} does not match the model's "
                f"{self.train_set.width}x{self.train_set.height}"
            )
        needs_transport = self.method in WASSERSTEIN_METHODS
        sq = None
        masses = None
        train_masses = None
        if needs_transport:
            grid = self.train_set.grid()
            cost = build_ground_cost(grid, grid)
            scfg = SinkhornConfig(epsilon=self.epsilon, objective_kind=self.objective_kind)
            train_measures = self.train_set.to_measures(grid, prune=self.prune)
            test_measures = images.to_measures(grid, prune=self.prune)
            sq = pairwise_distances(test_measures, train_measures, cost, scfg, jobs=jobs).values
            masses = np.array([m.mass_original for m in test_measures])
            train_masses = np.array([m.mass_original for m in train_measures])
        if self.knn is not None:
            rows = (
                sq
                if self.method is Method.WASS_KNN
                else squared_euclidean_distances(images.images, self.train_set.images)
            )
            return knn_predict_rows(self.knn, rows)
        train_data = TrainingData(
            labels=self.train_set.labels,
            sq_distances=None,
            intensities=self.train_set.images,
            masses=train_masses,
        )
        test_data = CrossData(sq_distances=sq, intensities=images.images, masses=masses)
        return self.ensemble.predict(test_data, train_data)


def load_model(path: str | Path) -> LoadedModel:
    box = read_container(path)
    if box.kind is not MatrixKind.MODEL:
        raise DataError(f"{path} is not a model container (kind {box.kind.name})")
    modl = box.section(b"MODL")
    labl = box.section(b"LABL")
    if modl is None or labl is None:
        raise DataError(f"{path}: missing MODL/LABL sections")
    (
        method_code,
        kernel_code,
        n_classes,
        gamma,
        ell,
        threshold,
        k,
        width,
        height,
        prune,
        objective_code,
    ) = _MODL.unpack_from(modl, 0)
    objective_kind = {v: k_ for k_, v in _OBJECTIVE_CODES.items()}[objective_code]
    classes = np.frombuffer(modl, dtype="<i8", count=n_classes, offset=_MODL.size)
    labels = np.frombuffer(labl, dtype="<i8")
    methods = list(Method)
    if method_code >= len(methods):
        raise DataError(f"{path}: unknown method code {method_code}")
    method = methods[method_code]
    kernel = {v: kk for kk, v in _KERNEL_CODES.items()}[kernel_code]
    n = labels.size
    if box.matrix.shape != (n, width * height):
        raise DataError(
            f"{path}: training matrix shape {box.matrix.shape} does not match "
            f"{n} samples of {width}x{height}"
        )
    train_set = LabeledImageSet(
        width=width, height=height, images=box.matrix, labels=labels.copy(), source=str(path)
    )

    if method in KNN_METHODS:
        knn = KnnModel(k=k, method=method, labels=train_set.labels)
        return LoadedModel(
            method=method,
            kernel=kernel,
            sigma=box.sigma,
            epsilon=box.epsilon,
            k=k,
            prune=bool(prune),
            objective_kind=objective_kind,
            train_set=train_set,
            ensemble=None,
            knn=knn,
        )

    core_section = box.section(b"CORE")
    core_indices = None
    fm = None
    eigp = box.section(b"EIGP")
    if core_section is not None:
        (count,) = struct.unpack_from("<I", core_section, 0)
        core_indices = np.frombuffer(core_section, dtype="<u4", count=count, offset=4).astype(
            np.intp
        )
    if eigp is not None:
        base_n = core_indices.size if core_indices is not None else n
        vals, vecs = unpack_eigenpairs(eigp, base_n)
        fm = FeatureMap(eigenvalues=vals, eigenvectors=vecs, threshold=threshold)
    pair_models = []
    primal = method in (Method.CORE, Method.CORE_OOS)
    for content in box.sections_tagged(b"PAIR"):
        ci, cj, nidx, veclen, bias = struct.unpack_from("<IIIId", content, 0)
        off = struct.calcsize("<IIIId")
        idx = np.frombuffer(content, dtype="<u4", count=nidx, offset=off).astype(np.intp)
        coef = np.frombuffer(content, dtype="<f8", count=veclen, offset=off + 4 * nidx).copy()
        if primal:
            model = LssvmPrimalModel(weights=coef, bias=bias, gamma=gamma, residual=0.0)
        else:
            model = LssvmDualModel(alpha=coef, bias=bias, gamma=gamma, residual=0.0)
        pair_models.append(PairModel(first=ci, second=cj, indices=idx, model=model))
    if not pair_models:
        raise DataError(f"{path}: model has no PAIR sections")
    params = OvoParams(
        method=method,
        sigma=box.sigma,
        gamma=gamma,
        kernel=kernel,
        eigen_threshold=threshold if threshold > 0 else 1e-6,
        core_size=core_indices.size if core_indices is not None else None,
        epsilon=box.epsilon,
    )
    ensemble = OvoEnsemble(
        classes=classes.copy(),
        params=params,
        pair_models=tuple(pair_models),
        feature_map=fm,
        core_indices=core_indices,
    )
    return LoadedModel(
        method=method,
        kernel=kernel,
        sigma=box.sigma,
        epsilon=box.epsilon,
        k=0,
        prune=bool(prune),
        objective_kind=objective_kind,
        train_set=train_set,
        ensemble=ensemble,
        knn=None,
    )
