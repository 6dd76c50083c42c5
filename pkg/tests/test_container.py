import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wasskern.container import (
    Container,
    MatrixKind,
    pack_eigenpairs,
    read_container,
    unpack_eigenpairs,
    write_container,
)
from wasskern.errors import DataError


def test_matrix_round_trip(tmp_path):
    m = np.arange(6, dtype=float).reshape(2, 3)
    box = Container(matrix=m, epsilon=0.4, sigma=0.0, kind=MatrixKind.TRANSPORT_SQ_DISTANCE)
    write_container(tmp_path / "m.wskn", box)
    back = read_container(tmp_path / "m.wskn")
    assert np.array_equal(back.matrix, m)
    assert back.epsilon == 0.4
    assert back.sigma == 0.0
    assert back.kind is MatrixKind.TRANSPORT_SQ_DISTANCE
    assert back.sections == ()


def test_sections_round_trip(tmp_path):
    box = Container(
        matrix=np.zeros((1, 1)),
        epsilon=0.0,
        sigma=1.0,
        kind=MatrixKind.GRAM_RBF,
        sections=((b"HASH", b"\x01" * 32), (b"PAIR", b"abc"), (b"PAIR", b"")),
    )
    write_container(tmp_path / "s.wskn", box)
    back = read_container(tmp_path / "s.wskn")
    assert back.section(b"HASH") == b"\x01" * 32
    assert back.sections_tagged(b"PAIR") == [b"abc", b""]
    assert back.section(b"NOPE") is None


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.wskn"
    p.write_bytes(b"XXXX" + b"\x00" * 40)
    with pytest.raises(DataError, match="magic"):
        read_container(p)


def test_truncated_payload_rejected(tmp_path):
    p = tmp_path / "t.wskn"
    box = Container(matrix=np.ones((4, 4)), epsilon=0.0, sigma=0.0, kind=MatrixKind.MODEL)
    write_container(p, box)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(DataError, match="truncated"):
        read_container(p)


def test_unsupported_version_rejected(tmp_path):
    p = tmp_path / "v.wskn"
    box = Container(matrix=np.ones((1, 1)), epsilon=0.0, sigma=0.0, kind=MatrixKind.MODEL)
    write_container(p, box)
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="version"):
        read_container(p)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 8), ell=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_eigenpair_pack_round_trip(n, ell, seed):
    ell = min(ell, n)
    rng = np.random.default_rng(seed)
    vals = np.sort(rng.normal(size=ell))[::-1].copy()
    vecs = rng.normal(size=(n, ell))
    packed = pack_eigenpairs(vals, vecs)
    vals2, vecs2 = unpack_eigenpairs(packed, n)
    assert np.array_equal(vals, vals2)
    assert np.array_equal(vecs, vecs2)


def test_eigenpair_length_mismatch_rejected():
    packed = pack_eigenpairs(np.ones(2), np.ones((3, 2)))
    with pytest.raises(DataError, match="EIGP"):
        unpack_eigenpairs(packed, 4)
