"""Versioned binary container for matrices, eigenpairs, and models.

Layout (all integers and floats little endian):

    magic   4 bytes  "WSKN"
    version u32      currently 1
    rows    u32
    cols    u32
    epsilon f64      entropic regularization behind the matrix (0 if none)
    sigma   f64      kernel bandwidth (0 for raw-distance caches)
    kind    u8       see MatrixKind
    payload rows*cols f64, row major

followed by zero or more sections, each ``tag (4 bytes) | length u64 |
content``. Known tags: HASH (sha256 digest of the source dataset), EIGP
(u32 count, eigenvalues f64[count], eigenvectors f64[rows*count], each
vector contiguous), and the model sections written by the experiment
layer. Unknown tags are preserved for forward compatibility.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"WSKN"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddB")


class MatrixKind(enum.IntEnum):
    TRANSPORT_SQ_DISTANCE = 0
    GRAM_WASSERSTEIN = 1
    GRAM_REWEIGHTED = 2
    GRAM_RBF = 3
    EUCLIDEAN_SQ_DISTANCE = 4
    MODEL = 16


@dataclass(frozen=True)
class Container:
    matrix: np.ndarray = field(repr=False)
    epsilon: float
    sigma: float
    kind: MatrixKind
    sections: tuple[tuple[bytes, bytes], ...] = ()

    def section(self, tag: bytes) -> bytes | None:
        for t, content in self.sections:
            if t == tag:
                return content
        return None

    def sections_tagged(self, tag: bytes) -> list[bytes]:
        return [content for t, content in self.sections if t == tag]


def write_container(path: str | Path, container: Container) -> None:
    matrix = np.ascontiguousarray(container.matrix, dtype="<f8")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC,
                FORMAT_VERSION,
                rows,
                cols,
                container.epsilon,
                container.sigma,
                int(container.kind),
            )
        )
        fh.write(matrix.tobytes())
        for tag, content in container.sections:
            if len(tag) != 4:
                raise DataError(f"section tag must be 4 bytes, got {tag!r}")
            fh.write(tag)
            fh.write(struct.pack("<Q", len(content)))
            fh.write(content)


def read_container(path: str | Path) -> Container:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, rows, cols, epsilon, sigma, kind = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    offset = _HEADER.size
    payload_bytes = rows * cols * 8
    if len(raw) < offset + payload_bytes:
        raise DataError(
            f"{path}: truncated payload, expected {payload_bytes} bytes at byte {offset}"
        )
    matrix = (
        np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
        .reshape(rows, cols)
        .copy()
    )
    offset += payload_bytes
    sections = []
    while offset < len(raw):
        if offset + 12 > len(raw):
            raise DataError(f"{path}: truncated section header at byte {offset}")
        tag = raw[offset : offset + 4]
        (length,) = struct.unpack_from("<Q", raw, offset + 4)
        offset += 12
        if offset + length > len(raw):
            raise DataError(f"{path}: truncated section {tag!r} at byte {offset}")
        sections.append((tag, raw[offset : offset + length]))
        offset += length
    try:
        kind = MatrixKind(kind)
    except ValueError as exc:
        raise DataError(f"{path}: unknown matrix kind {kind}") from exc
    return Container(
        matrix=matrix, epsilon=epsilon, sigma=sigma, kind=kind, sections=tuple(sections)
    )


def pack_eigenpairs(eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> bytes:
    """EIGP content: count, eigenvalues, then each eigenvector contiguously."""
    ell = eigenvalues.size
    vals = np.ascontiguousarray(eigenvalues, dtype="<f8")
    vecs = np.ascontiguousarray(eigenvectors.T, dtype="<f8")  # (ell, N): vectors contiguous
    return struct.pack("<I", ell) + vals.tobytes() + vecs.tobytes()


def unpack_eigenpairs(content: bytes, n: int) -> tuple[np.ndarray, np.ndarray]:
    if len(content) < 4:
        raise DataError("EIGP section too short")
    (ell,) = struct.unpack_from("<I", content, 0)
    need = 4 + 8 * ell + 8 * ell * n
    if len(content) != need:
        raise DataError(f"EIGP section length {len(content)}, expected {need}")
    vals = np.frombuffer(content, dtype="<f8", count=ell, offset=4).copy()
    vecs = (
        np.frombuffer(content, dtype="<f8", count=ell * n, offset=4 + 8 * ell)
        .reshape(ell, n)
        .T.copy()
    )
    return vals, vecs
