import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wasskern.errors import UsageError
from wasskern.kernels import (
    KernelKind,
    KernelSpec,
    cross_gram,
    exponential_kernel_matrix,
    gram,
    gram_from_distances,
    kernel_value,
    squared_euclidean_distances,
)
from wasskern.transport import ObjectiveKind, SinkhornConfig

from conftest import JOBS


@pytest.fixture(scope="module")
def ten_measures(digit_set):
    return digit_set.to_measures(prune=True)[:10]


def test_sigma_must_be_positive():
    with pytest.raises(UsageError):
        KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.0)
    with pytest.raises(UsageError):
        exponential_kernel_matrix(np.zeros((2, 2)), -1.0)


def test_self_kernel_value_is_one(ten_measures, cost28):
    spec = KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.5)
    # the regularized self-distance is negative, hence floored to zero
    assert kernel_value(ten_measures[0], ten_measures[0], spec, cost28) == 1.0


def test_distance_of_two_sigma_squared_gives_exp_minus_one():
    sigma = 0.7
    d2 = np.array([[0.0, 2 * sigma**2], [2 * sigma**2, 0.0]])
    k = exponential_kernel_matrix(d2, sigma)
    assert k[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_reweighted_self_value_is_squared_mass(digit_set, cost28, ten_measures):
    spec = KernelSpec(kind=KernelKind.REWEIGHTED_WASSERSTEIN_EXP, sigma=0.5)
    m = ten_measures[0]
    expected = m.mass_original**2
    assert kernel_value(m, m, spec, cost28) == pytest.approx(expected, rel=1e-12)


def test_reweighted_scale_covariance(digit_set, cost28):
    from wasskern.measure import DiscreteMeasure

    measures = digit_set.to_measures(prune=True)
    spec = KernelSpec(kind=KernelKind.REWEIGHTED_WASSERSTEIN_EXP, sigma=0.5)
    x, y = measures[0], measures[1]
    c = 3.7
    scaled = DiscreteMeasure(
        weights=x.weights, support=x.support, mass_original=c * x.mass_original, indices=x.indices
    )
    base = kernel_value(x, y, spec, cost28)
    assert kernel_value(scaled, y, spec, cost28) == pytest.approx(c * base, rel=1e-10)


def test_gram_single_measure_is_identity(ten_measures, cost28):
    spec = KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.5)
    G, _ = gram(ten_measures[:1], spec, cost28)
    assert np.array_equal(G.entries, [[1.0]])


def test_gram_matches_kernel_value_entrywise(ten_measures, cost28):
    spec = KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.5)
    G, report = gram(ten_measures, spec, cost28)
    assert report.all_converged
    for i in range(10):
        for j in range(10):
            if i == j:
                assert G.entries[i, j] == 1.0  # self-distance zeroed by convention
            else:
                expected = kernel_value(ten_measures[i], ten_measures[j], spec, cost28)
                assert G.entries[i, j] == expected


def test_gram_symmetric_unit_diagonal_in_unit_interval(ten_measures, cost28):
    spec = KernelSpec(
        kind=KernelKind.WASSERSTEIN_EXP,
        sigma=0.3,
        sinkhorn=SinkhornConfig(objective_kind=ObjectiveKind.TRANSPORT_COST),
    )
    G, _ = gram(ten_measures, spec, cost28, jobs=JOBS)
    e = G.entries
    assert np.array_equal(e, e.T)
    assert np.all(np.diag(e) == 1.0)
    assert np.all(e > 0) and np.all(e <= 1.0)


def test_cross_gram_same_list_diagonal_one(ten_measures, cost28):
    spec = KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.5)
    G, _ = gram(ten_measures[:4], spec, cost28)
    C, _ = cross_gram(ten_measures[:4], ten_measures[:4], spec, cost28)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(C[off], G.entries[off], atol=1e-12)
    assert np.allclose(np.diag(C), 1.0, atol=1e-12)


def test_cross_gram_row_vector(ten_measures, cost28):
    spec = KernelSpec(kind=KernelKind.WASSERSTEIN_EXP, sigma=0.5)
    C, _ = cross_gram(ten_measures[:1], ten_measures[1:6], spec, cost28)
    assert C.shape == (1, 5)
    assert np.all((C > 0) & (C <= 1.0))


def test_kernel_monotone_in_sigma(ten_measures, cost28):
    spec = KernelSpec(
        kind=KernelKind.WASSERSTEIN_EXP,
        sigma=0.5,
        sinkhorn=SinkhornConfig(objective_kind=ObjectiveKind.TRANSPORT_COST),
    )
    half = KernelSpec(
        kind=KernelKind.WASSERSTEIN_EXP,
        sigma=0.25,
        sinkhorn=spec.sinkhorn,
    )
    big, _ = cross_gram(ten_measures[:2], ten_measures[2:6], spec, cost28)
    small, _ = cross_gram(ten_measures[:2], ten_measures[2:6], half, cost28)
    assert np.all(small < big)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), sigma=st.floats(0.05, 5.0))
def test_exponential_matrix_monotone_in_sigma(seed, sigma):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.01, 2.0, size=(4, 4))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    lo = exponential_kernel_matrix(d, sigma)
    hi = exponential_kernel_matrix(d, sigma * 1.5)
    off = ~np.eye(4, dtype=bool)
    assert np.all(hi[off] > lo[off])


def test_rbf_gram_is_psd(digit_set):
    measures = digit_set.to_measures()[:30]
    spec = KernelSpec(kind=KernelKind.EUCLIDEAN_RBF, sigma=500.0)
    G, report = gram(measures, spec, cost=None)
    assert report is None
    vals = np.linalg.eigvalsh(G.entries)
    assert vals[0] >= -1e-8 * vals[-1]


def test_rbf_uses_raw_intensities(digit_set):
    measures = digit_set.to_measures()[:2]
    u = measures[0].intensity_vector()
    v = measures[1].intensity_vector()
    sigma = 300.0
    expected = np.exp(-((u - v) ** 2).sum() / (2 * sigma**2))
    spec = KernelSpec(kind=KernelKind.EUCLIDEAN_RBF, sigma=sigma)
    assert kernel_value(measures[0], measures[1], spec, cost=None) == pytest.approx(
        expected, rel=1e-12
    )


def test_squared_euclidean_distances_match_naive():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 7))
    y = rng.normal(size=(4, 7))
    sq = squared_euclidean_distances(x, y)
    naive = np.array([[((a - b) ** 2).sum() for b in y] for a in x])
    assert np.allclose(sq, naive, atol=1e-10)
    assert np.all(sq >= 0)


def test_reweighted_gram_diagonal_is_squared_mass(ten_measures, cost28):
    masses = np.array([m.mass_original for m in ten_measures])
    spec = KernelSpec(kind=KernelKind.REWEIGHTED_WASSERSTEIN_EXP, sigma=0.5)
    G, _ = gram(ten_measures, spec, cost28)
    assert np.allclose(np.diag(G.entries), masses**2, rtol=1e-12)


def test_gram_from_distances_requires_masses_for_reweighted():
    spec = KernelSpec(kind=KernelKind.REWEIGHTED_WASSERSTEIN_EXP, sigma=1.0)
    with pytest.raises(UsageError):
        gram_from_distances(np.zeros((2, 2)), spec)
