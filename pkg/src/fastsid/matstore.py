"""Matrix values, binary blob framing and the in-process blob store.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
:func:`as_matrix` is the single gate that enforces that contract; everything
published to a :class:`BlobStore` goes through it and comes back read-only.

Blob layout (little-endian)::

    b"SIDM" | rows: uint64 | cols: uint64 | rows*cols float64, row-major
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptBlob, DuplicateKey, MissingKey, NonFiniteMatrix

MAGIC = b"SIDM"
_HEADER = struct.Struct("<4sQQ")
_LE_F64 = np.dtype("<f8")


def as_matrix(x, *, copy: bool = False) -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array.

    Raises
    ------
    NonFiniteMatrix
        If any entry is NaN or infinite.
    ValueError
        If ``x`` is not two-dimensional.
    """
    a = np.array(x, dtype=np.float64, copy=True if copy else None, order="C")
    if a.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteMatrix("matrix contains NaN or Inf entries")
    return a


def frozen(x) -> np.ndarray:
    """Return a read-only, validated private copy of ``x``."""
    a = as_matrix(x, copy=True)
    a.setflags(write=False)
    return a


def serialize_matrix(m) -> bytes:
    a = as_matrix(m)
    rows, cols = a.shape
    return _HEADER.pack(MAGIC, rows, cols) + a.astype(_LE_F64, copy=False).tobytes(order="C")


def deserialize_matrix(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise CorruptBlob(f"blob too short for header ({len(blob)} bytes)")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptBlob(f"bad magic tag {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) != expected:
        raise CorruptBlob(f"blob length {len(blob)} does not match {rows}x{cols} payload")
    a = np.frombuffer(blob, dtype=_LE_F64, offset=_HEADER.size).reshape(rows, cols)
    # frombuffer over bytes is already read-only
    return a.astype(np.float64, copy=False)


@dataclass(frozen=True)
class BlobKey:
    namespace: str
    name: str

    def __post_init__(self):
        if not self.namespace or not self.name:
            raise ValueError("BlobKey namespace and name must be non-empty")

    def __str__(self):
        return f"{self.namespace}/{self.name}"


class BlobStore:
    """Write-once key/value store for matrices, shared between worker threads.

    Values are kept as serialized blobs so that a reader always decodes the
    exact bytes that were published. Publication is a single dict insert
    under a lock, so readers see either nothing or the whole blob.
    """

    def __init__(self):
        self._blobs: dict[BlobKey, bytes] = {}
        self._lock = threading.Lock()

    def put(self, key: BlobKey, m) -> None:
        blob = serialize_matrix(m)
        with self._lock:
            if key in self._blobs:
                raise DuplicateKey(str(key))
            self._blobs[key] = blob

    def get(self, key: BlobKey) -> np.ndarray:
        with self._lock:
            blob = self._blobs.get(key)
        if blob is None:
            raise MissingKey(str(key))
        return deserialize_matrix(blob)

    def get_bytes(self, key: BlobKey) -> bytes:
        with self._lock:
            blob = self._blobs.get(key)
        if blob is None:
            raise MissingKey(str(key))
        return blob

    def __contains__(self, key: BlobKey) -> bool:
        with self._lock:
            return key in self._blobs

    def __len__(self) -> int:
        with self._lock:
            return len(self._blobs)

    def keys(self, namespace: str | None = None) -> list[BlobKey]:
        with self._lock:
            ks = list(self._blobs)
        if namespace is not None:
            ks = [k for k in ks if k.namespace == namespace]
        return sorted(ks, key=lambda k: (k.namespace, k.name))

    def drop_namespace(self, namespace: str) -> int:
        """Forget every key in ``namespace``; returns how many were removed."""
        with self._lock:
            doomed = [k for k in self._blobs if k.namespace == namespace]
            for k in doomed:
                del self._blobs[k]
        return len(doomed)

    def dump(self, directory, namespace: str | None = None) -> list[Path]:
        """Write each blob to ``directory/<namespace>/<name>.sidm`` (debug aid)."""
        out = []
        for key in self.keys(namespace):
            path = Path(directory) / key.namespace / f"{key.name}.sidm"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.get_bytes(key))
            out.append(path)
        return out


def load_blob_file(path) -> np.ndarray:
    return deserialize_matrix(Path(path).read_bytes())
