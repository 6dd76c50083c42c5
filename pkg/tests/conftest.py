"""Shared fixtures.

Digit-like image data comes from the synthetic shape generator, written to
and re-read from IDX files so every test exercises the real ingestion
path. Point WASSKERN_MNIST_IMAGES / WASSKERN_MNIST_LABELS at an IDX pair
(e.g. the MNIST training files) to run the same suite on real digits.
"""

import os

import numpy as np
import pytest

from wasskern.data import balanced_subsample, load_idx, save_idx, synthetic_shapes, SplitPlan
from wasskern.measure import build_ground_cost
from wasskern.transport import ObjectiveKind, SinkhornConfig, pairwise_distances

JOBS = min(2, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def digit_set(tmp_path_factory):
    """600 labeled 28x28 images, loaded through the IDX code path."""
    env_images = os.environ.get("WASSKERN_MNIST_IMAGES")
    env_labels = os.environ.get("WASSKERN_MNIST_LABELS")
    if env_images and env_labels:
        full = load_idx(env_images, env_labels)
        keep = min(len(full), 600)
        return full.take(np.arange(keep), source="mnist[:600]")
    root = tmp_path_factory.mktemp("idx")
    synth = synthetic_shapes(600, seed=11)
    save_idx(synth, root / "images.idx", root / "labels.idx")
    return load_idx(root / "images.idx", root / "labels.idx")


@pytest.fixture(scope="session")
def grid28(digit_set):
    return digit_set.grid()


@pytest.fixture(scope="session")
def cost28(grid28):
    return build_ground_cost(grid28, grid28)


@pytest.fixture(scope="session")
def digits200(digit_set):
    """Class-balanced 200-image subset with measures on the shared grid."""
    subset, _, _ = balanced_subsample(
        digit_set, SplitPlan(train_size=200, validation_size=10, test_size=10, rng_seed=3)
    )
    return subset


@pytest.fixture(scope="session")
def sq_dist_200(digits200, cost28):
    """Pairwise squared transport distances (plain cost) on the 200 digits."""
    measures = digits200.to_measures(prune=True)
    cfg = SinkhornConfig(
        epsilon=0.4, marginal_tolerance=1e-6, objective_kind=ObjectiveKind.TRANSPORT_COST
    )
    report = pairwise_distances(measures, measures, cost28, cfg, jobs=JOBS)
    assert report.all_converged
    return report.values
