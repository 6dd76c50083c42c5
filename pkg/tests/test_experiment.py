import numpy as np
import pytest

from wasskern.classify import Method
from wasskern.config import ExperimentConfig
from wasskern.data import synthetic_shapes
from wasskern.errors import DataError
from wasskern.experiment import (
    cached_transport_distances,
    load_model,
    run_experiment,
    run_repetition,
    save_model,
)
from wasskern.measure import build_ground_cost
from wasskern.transport import ObjectiveKind, SinkhornConfig

SHARP = SinkhornConfig(
    epsilon=0.01, max_iterations=20000, marginal_tolerance=1e-6,
    objective_kind=ObjectiveKind.TRANSPORT_COST,
)


def small_cfg(method, tmp_path, **kw):
    return ExperimentConfig(
        data_format="synthetic",
        synthetic_count=80,
        synthetic_seed=3,
        method=method,
        train_size=30,
        validation_size=20,
        test_size=20,
        seeds=(0,),
        sinkhorn=SHARP,
        sigma_grid=(0.1, 0.2),
        gamma_grid=(10.0, 1e6),
        output=str(tmp_path / "out"),
        **kw,
    )


def test_cache_reuse_and_corruption(tmp_path):
    ds = synthetic_shapes(12, seed=1)
    grid = ds.grid()
    cost = build_ground_cost(grid, grid)
    cache = tmp_path / "cache"
    first = cached_transport_distances(cache, ds, None, cost, SHARP, prune=True)
    files = list(cache.glob("dist_*.wskn"))
    assert len(files) == 1
    mtime = files[0].stat().st_mtime_ns
    again = cached_transport_distances(cache, ds, None, cost, SHARP, prune=True)
    assert np.array_equal(first, again)
    assert files[0].stat().st_mtime_ns == mtime  # untouched: served from disk

    # corrupt the recorded hash: the file no longer matches the request key
    raw = bytearray(files[0].read_bytes())
    idx = raw.rfind(b"HASH") + 12
    raw[idx] ^= 0xFF
    files[0].write_bytes(bytes(raw))
    with pytest.raises(DataError, match="does not match"):
        cached_transport_distances(cache, ds, None, cost, SHARP, prune=True)


@pytest.mark.parametrize("method", [Method.CORE, Method.CORE_OOS, Method.INDEFINITE, Method.RBF])
def test_lssvm_methods_round_trip_through_model_file(tmp_path, method):
    kw = {"core_size": 16} if method is Method.CORE_OOS else {}
    cfg = small_cfg(method, tmp_path, **kw)
    dataset = cfg.load_dataset()
    record, bundle = run_repetition(cfg, dataset, 0, tmp_path / "cache")
    assert 0.0 <= record.test_error_pct <= 100.0
    assert 0.0 <= record.validation_error_pct <= 100.0
    if method in (Method.CORE, Method.CORE_OOS):
        assert record.ell is not None and record.ell >= 1
    assert record.lambda_min is not None

    path = tmp_path / "model.wskn"
    save_model(path, bundle)
    loaded = load_model(path)
    assert loaded.method is method
    train = bundle.train_set
    direct = bundle.ensemble.predict(
        _cross_for(bundle, cfg, train), bundle.train_data
    )
    via_file = loaded.predict(train)
    assert np.array_equal(direct, via_file)


def _cross_for(bundle, cfg, image_set):
    from wasskern.classify import CrossData
    from wasskern.kernels import squared_euclidean_distances
    from wasskern.transport import pairwise_distances

    if bundle.ensemble.params.method is Method.RBF:
        return CrossData(intensities=image_set.images)
    grid = bundle.train_set.grid()
    cost = build_ground_cost(grid, grid)
    sq = pairwise_distances(
        image_set.to_measures(grid, prune=cfg.prune),
        bundle.train_set.to_measures(grid, prune=cfg.prune),
        cost,
        cfg.sinkhorn,
    ).values
    masses = image_set.images.sum(axis=1)
    train_masses = bundle.train_set.images.sum(axis=1)
    return CrossData(sq_distances=sq, intensities=image_set.images, masses=masses)


def test_knn_methods_round_trip(tmp_path):
    for method in (Method.WASS_KNN, Method.L2_KNN):
        cfg = small_cfg(method, tmp_path)
        dataset = cfg.load_dataset()
        record, bundle = run_repetition(cfg, dataset, 0, tmp_path / "cache")
        assert record.k in cfg.k_grid
        path = tmp_path / f"{method.value}.wskn"
        save_model(path, bundle)
        loaded = load_model(path)
        assert loaded.knn is not None and loaded.knn.k == record.k
        predictions = loaded.predict(bundle.train_set)
        assert predictions.shape == (len(bundle.train_set),)


def test_reweighted_kernel_method(tmp_path):
    from wasskern.kernels import KernelKind

    cfg = small_cfg(Method.INDEFINITE, tmp_path, kernel=KernelKind.REWEIGHTED_WASSERSTEIN_EXP)
    dataset = cfg.load_dataset()
    record, bundle = run_repetition(cfg, dataset, 0, tmp_path / "cache")
    assert 0.0 <= record.test_error_pct <= 100.0
    path = tmp_path / "rw.wskn"
    save_model(path, bundle)
    assert load_model(path).kernel is KernelKind.REWEIGHTED_WASSERSTEIN_EXP


def test_run_experiment_collects_failures(tmp_path):
    cfg = ExperimentConfig(
        data_format="synthetic",
        synthetic_count=30,  # too small for the requested split sizes
        method=Method.L2_KNN,
        train_size=20,
        validation_size=20,
        test_size=20,
        seeds=(0, 1),
        output=str(tmp_path / "out"),
    )
    out, model = run_experiment(cfg)
    assert not out.records
    assert len(out.failures) == 2
    assert model is None
    assert out.summary_row() is None


def test_sweep_rows(tmp_path):
    cfg = ExperimentConfig(
        data_format="synthetic",
        synthetic_count=100,
        method=Method.L2_KNN,
        train_size=30,
        validation_size=20,
        test_size=20,
        seeds=(0, 1),
        sweep_sizes=(10, 20),
        k_grid=(1, 3),
        output=str(tmp_path / "out"),
    )
    out, _ = run_experiment(cfg)
    assert [r[0] for r in out.sweep_rows] == [10, 20]
    for _, mean, std in out.sweep_rows:
        assert 0.0 <= mean <= 100.0
        assert std >= 0.0


def test_feature_map_persistence_round_trip(tmp_path):
    from wasskern.experiment import load_feature_map, save_feature_map
    from wasskern.kernels import exponential_kernel_matrix, squared_euclidean_distances
    from wasskern.spectral import eigendecompose, truncate

    rng = np.random.default_rng(8)
    x = rng.normal(size=(9, 4))
    sq = squared_euclidean_distances(x)
    np.fill_diagonal(sq, 0.0)
    K = exponential_kernel_matrix(sq, 1.3)
    fm = truncate(eigendecompose(K), threshold=1e-8)
    path = tmp_path / "fm.wskn"
    save_feature_map(path, fm, K, epsilon=0.01, sigma=1.3)
    back, box = load_feature_map(path)
    assert np.array_equal(back.eigenvalues, fm.eigenvalues)
    assert np.array_equal(back.eigenvectors, fm.eigenvectors)
    assert np.array_equal(box.matrix, K)
    assert box.sigma == 1.3
    assert np.all(back.eigenvalues > back.threshold)
