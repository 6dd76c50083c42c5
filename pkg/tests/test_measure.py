import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wasskern.errors import DataError, UsageError
from wasskern.measure import (
    DiscreteMeasure,
    GrayImage,
    PixelGrid,
    build_ground_cost,
    image_to_measure,
)


def test_two_by_two_image_normalizes():
    g = PixelGrid.of(2, 2)
    m = image_to_measure(GrayImage(2, 2, np.array([0.0, 2.0, 2.0, 0.0])), g)
    assert np.array_equal(m.weights, [0.0, 0.5, 0.5, 0.0])
    assert m.mass_original == 4.0


def test_single_pixel_image():
    g = PixelGrid.of(1, 1)
    m = image_to_measure(GrayImage(1, 1, np.array([7.0])), g)
    assert np.array_equal(m.weights, [1.0])
    assert m.mass_original == 7.0


def test_idx_loaded_digits_normalize(digit_set):
    m = image_to_measure(digit_set.image(0), digit_set.grid())
    assert abs(m.weights.sum() - 1.0) <= 1e-12
    assert m.weights.min() >= 0.0


def test_zero_mass_image_rejected():
    g = PixelGrid.of(2, 2)
    with pytest.raises(DataError, match="zero-mass"):
        image_to_measure(GrayImage(2, 2, np.zeros(4)), g)


def test_grid_mismatch_rejected():
    with pytest.raises(UsageError):
        image_to_measure(GrayImage(2, 2, np.ones(4)), PixelGrid.of(3, 3))


def test_negative_intensity_rejected():
    with pytest.raises(DataError):
        GrayImage(2, 2, np.array([1.0, -1.0, 0.0, 0.0]))


def test_grid_coordinates_unit_square():
    g = PixelGrid.of(2, 2)
    assert np.array_equal(g.coordinates, [[0, 0], [0, 1], [1, 0], [1, 1]])
    g28 = PixelGrid.of(28, 28)
    assert g28.coordinates.min() == 0.0
    assert g28.coordinates.max() == 1.0


def test_ground_cost_unit_square():
    g = PixelGrid.of(2, 2)
    c = build_ground_cost(g, g)
    assert c.entries[0, 3] == 2.0
    assert c.entries[0, 1] == 1.0


def test_ground_cost_single_point():
    g = PixelGrid.of(1, 1)
    assert np.array_equal(build_ground_cost(g, g).entries, [[0.0]])


def test_ground_cost_28_max_is_two():
    g = PixelGrid.of(28, 28)
    c = build_ground_cost(g, g)
    assert c.entries.max() == pytest.approx(2.0, abs=1e-12)


def test_ground_cost_symmetric_zero_diagonal():
    g = PixelGrid.of(5, 3)
    c = build_ground_cost(g, g)
    assert np.array_equal(c.entries, c.entries.T)
    assert np.all(np.diag(c.entries) == 0.0)


@settings(max_examples=25, deadline=None)
@given(
    scale=st.floats(min_value=1e-3, max_value=1e3),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_intensity_scaling_leaves_weights_unchanged(scale, seed):
    rng = np.random.default_rng(seed)
    vals = rng.random(9) * (rng.random(9) < 0.7)
    if vals.sum() == 0:
        vals[0] = 1.0
    g = PixelGrid.of(3, 3)
    base = image_to_measure(GrayImage(3, 3, vals), g)
    scaled = image_to_measure(GrayImage(3, 3, vals * scale), g)
    assert np.allclose(scaled.weights, base.weights, atol=1e-15)
    assert scaled.mass_original == pytest.approx(base.mass_original * scale, rel=1e-12)


def test_prune_drops_zero_atoms_only():
    g = PixelGrid.of(2, 2)
    m = image_to_measure(GrayImage(2, 2, np.array([0.0, 2.0, 2.0, 0.0])), g)
    p = m.prune()
    assert np.array_equal(p.grid_indices(), [1, 2])
    assert np.array_equal(p.weights, [0.5, 0.5])
    assert np.array_equal(p.intensity_vector(), m.intensity_vector())


def test_measure_weight_sum_enforced():
    g = PixelGrid.of(1, 2)
    with pytest.raises(DataError):
        DiscreteMeasure(weights=np.array([0.6, 0.6]), support=g, mass_original=1.0)
