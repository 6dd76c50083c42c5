import struct

import numpy as np
import pytest

from wasskern.data import (
    LabeledImageSet,
    SplitPlan,
    balanced_subsample,
    load_csv,
    load_idx,
    save_csv,
    save_idx,
    synthetic_shapes,
)
from wasskern.errors import DataError, UsageError


def tiny_set():
    return LabeledImageSet(
        width=2,
        height=2,
        images=np.array([[0.0, 10, 20, 255], [5, 5, 5, 5]]),
        labels=np.array([3, 250]),
    )


def test_idx_round_trip(tmp_path):
    ds = tiny_set()
    save_idx(ds, tmp_path / "img", tmp_path / "lab")
    back = load_idx(tmp_path / "img", tmp_path / "lab")
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)
    assert (back.width, back.height) == (2, 2)


def test_idx_label_byte_above_nine_accepted(tmp_path):
    ds = tiny_set()  # label 250 is valid at the format level
    save_idx(ds, tmp_path / "img", tmp_path / "lab")
    assert load_idx(tmp_path / "img", tmp_path / "lab").labels[1] == 250


def test_idx_bad_magic_named_with_offset(tmp_path):
    ds = tiny_set()
    save_idx(ds, tmp_path / "img", tmp_path / "lab")
    raw = bytearray((tmp_path / "img").read_bytes())
    raw[0:4] = struct.pack(">I", 0xDEADBEEF)
    (tmp_path / "img").write_bytes(bytes(raw))
    with pytest.raises(DataError, match="magic.*byte 0"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_truncated_payload(tmp_path):
    ds = tiny_set()
    save_idx(ds, tmp_path / "img", tmp_path / "lab")
    raw = (tmp_path / "img").read_bytes()
    (tmp_path / "img").write_bytes(raw[:-3])
    with pytest.raises(DataError, match="truncated"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_count_mismatch(tmp_path):
    ds = tiny_set()
    save_idx(ds, tmp_path / "img", tmp_path / "lab")
    raw = bytearray((tmp_path / "lab").read_bytes())
    raw[4:8] = struct.pack(">I", 9)
    (tmp_path / "lab").write_bytes(bytes(raw))
    with pytest.raises(DataError, match="count"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_export_rejects_non_integral(tmp_path):
    ds = LabeledImageSet(
        width=1, height=1, images=np.array([[0.5]]), labels=np.array([0])
    )
    with pytest.raises(DataError, match="integral"):
        save_idx(ds, tmp_path / "img", tmp_path / "lab")


def test_csv_single_row(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("label,w,h,p0,p1\n3,1,2,0,5\n")
    ds = load_csv(path)
    assert len(ds) == 1
    assert ds.labels[0] == 3
    assert (ds.width, ds.height) == (1, 2)
    assert np.array_equal(ds.images[0], [0.0, 5.0])


def test_csv_empty_data_section_valid(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("label,w,h,p0,p1,p2,p3\n")
    ds = load_csv(path)
    assert len(ds) == 0


def test_csv_round_trip_from_idx(tmp_path):
    ds = tiny_set()
    save_csv(ds, tmp_path / "set.csv")
    back = load_csv(tmp_path / "set.csv")
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)


def test_csv_ragged_row_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,w,h,p0,p1\n3,1,2,0,5\n4,1,2,9\n")
    with pytest.raises(DataError, match=":3"):
        load_csv(path)


def test_csv_negative_pixel_rejected(tmp_path):
    path = tmp_path / "neg.csv"
    path.write_text("label,w,h,p0,p1\n3,1,2,0,-5\n")
    with pytest.raises(DataError, match="negative"):
        load_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="header"):
        load_csv(path)


def test_balanced_quotas_exact():
    ds = synthetic_shapes(1000, seed=0)
    train, val, test = balanced_subsample(
        ds, SplitPlan(train_size=500, validation_size=100, test_size=200, rng_seed=1)
    )
    for split, size in ((train, 500), (val, 100), (test, 200)):
        assert len(split) == size
        counts = np.bincount(split.labels, minlength=10)
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == size


def test_split_seed_determinism_and_difference():
    ds = synthetic_shapes(400, seed=0)
    plan = SplitPlan(train_size=100, validation_size=50, test_size=50, rng_seed=9)
    a1 = balanced_subsample(ds, plan)
    a2 = balanced_subsample(ds, plan)
    for x, y in zip(a1, a2):
        assert np.array_equal(x.source_indices, y.source_indices)
    other = balanced_subsample(
        ds, SplitPlan(train_size=100, validation_size=50, test_size=50, rng_seed=10)
    )
    assert not np.array_equal(a1[0].source_indices, other[0].source_indices)


def test_splits_disjoint():
    ds = synthetic_shapes(400, seed=3)
    train, val, test = balanced_subsample(
        ds, SplitPlan(train_size=120, validation_size=60, test_size=60, rng_seed=2)
    )
    all_idx = np.concatenate(
        [train.source_indices, val.source_indices, test.source_indices]
    )
    assert len(np.unique(all_idx)) == len(all_idx)


def test_insufficient_samples_reports_deficit():
    ds = synthetic_shapes(50, seed=0)
    with pytest.raises(UsageError, match="class"):
        balanced_subsample(
            ds, SplitPlan(train_size=200, validation_size=200, test_size=200, rng_seed=0)
        )


def test_synthetic_shapes_deterministic():
    a = synthetic_shapes(30, seed=5)
    b = synthetic_shapes(30, seed=5)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert a.images.min() >= 0 and a.images.max() <= 255
    assert np.array_equal(a.images, np.round(a.images))


def test_synthetic_shapes_idx_compatible(tmp_path):
    ds = synthetic_shapes(20, seed=6)
    save_idx(ds, tmp_path / "i", tmp_path / "l")
    back = load_idx(tmp_path / "i", tmp_path / "l")
    assert np.array_equal(back.images, ds.images)
