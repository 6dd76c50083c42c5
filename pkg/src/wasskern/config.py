"""Experiment configuration: a sectioned key = value file plus overrides.

Format (INI, parsed with configparser; all keys optional unless noted):

    [data]
    format = idx | csv | synthetic
    images = train-images.idx      # idx format
    labels = train-labels.idx      # idx format
    path   = shapes.csv            # csv format
    count  = 600                   # synthetic format
    data_seed = 7                  # synthetic format

    [split]
    train = 500
    validation = 500
    test = 1000
    core = 0                       # core subset size for the core-oos method

    [sinkhorn]
    epsilon = 0.4
    max_iterations = 1000
    tolerance = 1e-6
    prune = true                   # drop zero-weight atoms before solving
    objective = cost               # cost | regularized; distance reported to kernels.
                                   # The entropic term scales with the support entropy,
                                   # which on the unit grid swamps every transport cost,
                                   # so kernels are built on the plain cost by default.

    [experiment]
    method = indefinite            # core | core-oos | indefinite | rbf | wass-knn | l2-knn
    kernel = plain                 # plain | reweighted (transport kernels only)
    seeds = 0,1,2
    output = out
    jobs = 1
    threshold = 1e-6               # eigenvalue cutoff for core methods
    sweep =                        # optional train sizes for error-vs-size curves

    [grids]
    sigma = auto                   # or comma-separated bandwidths
    gamma = auto
    k = 1,3,5,7,9,11

Environment variables override paths only: WASSKERN_IMAGES, WASSKERN_LABELS,
WASSKERN_DATA, WASSKERN_OUTPUT.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .classify import KNN_METHODS, Method
from .data import LabeledImageSet, load_csv, load_idx, synthetic_shapes
from .errors import UsageError
from .kernels import KernelKind
from .transport import ObjectiveKind, SinkhornConfig

_METHODS = {m.value: m for m in Method}
_KERNELS = {"plain": KernelKind.WASSERSTEIN_EXP, "reweighted": KernelKind.REWEIGHTED_WASSERSTEIN_EXP}

PATH_ENV_OVERRIDES = {
    "images": "WASSKERN_IMAGES",
    "labels": "WASSKERN_LABELS",
    "path": "WASSKERN_DATA",
    "output": "WASSKERN_OUTPUT",
}


@dataclass(frozen=True)
class ExperimentConfig:
    data_format: str = "synthetic"
    images: str | None = None
    labels: str | None = None
    data_path: str | None = None
    synthetic_count: int = 600
    synthetic_seed: int = 7

    train_size: int = 500
    validation_size: int = 500
    test_size: int = 1000
    core_size: int = 0

    sinkhorn: SinkhornConfig = SinkhornConfig(objective_kind=ObjectiveKind.TRANSPORT_COST)
    prune: bool = True

    method: Method = Method.INDEFINITE
    kernel: KernelKind = KernelKind.WASSERSTEIN_EXP
    seeds: tuple[int, ...] = (0,)
    output: str = "out"
    jobs: int = 1
    eigen_threshold: float = 1e-6
    sweep_sizes: tuple[int, ...] = ()

    sigma_grid: tuple[float, ...] | None = None  # None = auto
    gamma_grid: tuple[float, ...] | None = None
    k_grid: tuple[int, ...] = (1, 3, 5, 7, 9, 11)

    def validate(self) -> None:
        if self.method is Method.CORE_OOS and self.core_size < 1:
            raise UsageError("core-oos needs [split] core >= 1")
        if self.method in KNN_METHODS and not self.k_grid:
            raise UsageError("kNN methods need a non-empty [grids] k")
        if self.data_format == "idx":
            for label, p in (("images", self.images), ("labels", self.labels)):
                if not p:
                    raise UsageError(f"[data] {label} is required for idx format")
                if not Path(p).exists():
                    raise UsageError(f"[data] {label} path does not exist: {p}")
        elif self.data_format == "csv":
            if not self.data_path:
                raise UsageError("[data] path is required for csv format")
            if not Path(self.data_path).exists():
                raise UsageError(f"[data] path does not exist: {self.data_path}")
        elif self.data_format != "synthetic":
            raise UsageError(f"unknown data format {self.data_format!r}")

    def load_dataset(self) -> LabeledImageSet:
        if self.data_format == "idx":
            return load_idx(self.images, self.labels)
        if self.data_format == "csv":
            return load_csv(self.data_path)
        return synthetic_shapes(self.synthetic_count, seed=self.synthetic_seed)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional file plus CLI/env overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise UsageError(f"config file not found: {path}")
        parser.read(path)

    def get(section: str, key: str, fallback=None):
        ov = (overrides or {}).get(f"{section}.{key}")
        if ov is not None:
            return str(ov)
        if key in PATH_ENV_OVERRIDES and section in ("data", "experiment"):
            env = os.environ.get(PATH_ENV_OVERRIDES[key])
            if env:
                return env
        return parser.get(section, key, fallback=fallback)

    try:
        objective_name = get("sinkhorn", "objective", "cost").strip().lower()
        if objective_name not in ("cost", "regularized"):
            raise UsageError(f"[sinkhorn] objective must be cost or regularized, got {objective_name!r}")
        sinkhorn = SinkhornConfig(
            epsilon=float(get("sinkhorn", "epsilon", "0.4")),
            max_iterations=int(get("sinkhorn", "max_iterations", "1000")),
            marginal_tolerance=float(get("sinkhorn", "tolerance", "1e-6")),
            objective_kind=ObjectiveKind.TRANSPORT_COST
            if objective_name == "cost"
            else ObjectiveKind.REGULARIZED,
        )
        method_name = get("experiment", "method", "indefinite")
        if method_name not in _METHODS:
            raise UsageError(f"unknown method {method_name!r}, expected one of {sorted(_METHODS)}")
        kernel_name = get("experiment", "kernel", "plain")
        if kernel_name not in _KERNELS:
            raise UsageError(f"unknown kernel {kernel_name!r}, expected plain or reweighted")
        sigma_text = get("grids", "sigma", "auto")
        gamma_text = get("grids", "gamma", "auto")
        sweep_text = get("experiment", "sweep", "") or ""
        cfg = ExperimentConfig(
            data_format=get("data", "format", "synthetic"),
            images=get("data", "images", None),
            labels=get("data", "labels", None),
            data_path=get("data", "path", None),
            synthetic_count=int(get("data", "count", "600")),
            synthetic_seed=int(get("data", "data_seed", "7")),
            train_size=int(get("split", "train", "500")),
            validation_size=int(get("split", "validation", "500")),
            test_size=int(get("split", "test", "1000")),
            core_size=int(get("split", "core", "0")),
            sinkhorn=sinkhorn,
            prune=get("sinkhorn", "prune", "true").strip().lower() in ("1", "true", "yes", "on"),
            method=_METHODS[method_name],
            kernel=_KERNELS[kernel_name],
            seeds=_parse_ints(get("experiment", "seeds", "0")),
            output=get("experiment", "output", "out"),
            jobs=int(get("experiment", "jobs", "1")),
            eigen_threshold=float(get("experiment", "threshold", "1e-6")),
            sweep_sizes=_parse_ints(sweep_text),
            sigma_grid=None if sigma_text.strip() == "auto" else _parse_floats(sigma_text),
            gamma_grid=None if gamma_text.strip() == "auto" else _parse_floats(gamma_text),
            k_grid=_parse_ints(get("grids", "k", "1,3,5,7,9,11")),
        )
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    if not cfg.seeds:
        raise UsageError("[experiment] seeds must list at least one seed")
    return cfg
