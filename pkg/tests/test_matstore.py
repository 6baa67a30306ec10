import struct
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastsid.errors import CorruptBlob, DuplicateKey, MissingKey, NonFiniteMatrix
from fastsid.matstore import (BlobKey, BlobStore, as_matrix, deserialize_matrix, frozen,
                              load_blob_file, serialize_matrix)


def test_zero_scalar_blob_is_28_bytes():
    blob = serialize_matrix([[0.0]])
    assert len(blob) == 4 + 8 + 8 + 8
    assert blob[:4] == b"SIDM"
    assert np.array_equal(deserialize_matrix(blob), [[0.0]])


def test_header_layout_is_little_endian():
    blob = serialize_matrix(np.arange(1.0, 7.0).reshape(2, 3))
    magic, rows, cols = struct.unpack("<4sQQ", blob[:20])
    assert (magic, rows, cols) == (b"SIDM", 2, 3)
    # row-major payload
    assert struct.unpack("<6d", blob[20:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


def test_small_round_trip_bit_exact():
    m = np.arange(1.0, 7.0).reshape(2, 3)
    out = deserialize_matrix(serialize_matrix(m))
    assert out.tobytes() == m.tobytes()


def test_random_40x1000_round_trip(rng):
    m = rng.standard_normal((40, 1000))
    assert np.array_equal(deserialize_matrix(serialize_matrix(m)), m)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_round_trip_property(m):
    out = deserialize_matrix(serialize_matrix(m))
    assert out.shape == m.shape
    assert out.tobytes() == m.tobytes()  # also distinguishes -0.0


def test_rejects_non_finite():
    with pytest.raises(NonFiniteMatrix):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(NonFiniteMatrix):
        serialize_matrix([[np.inf]])


@pytest.mark.parametrize("blob", [b"", b"XXXX" + bytes(16), serialize_matrix([[1.0, 2.0]])[:-1]])
def test_corrupt_blobs(blob):
    with pytest.raises(CorruptBlob):
        deserialize_matrix(blob)


def test_frozen_is_read_only():
    m = frozen([[1.0, 2.0]])
    with pytest.raises(ValueError):
        m[0, 0] = 3.0


def test_blob_key_must_be_non_empty():
    with pytest.raises(ValueError):
        BlobKey("", "x")
    with pytest.raises(ValueError):
        BlobKey("run", "")


def test_put_get_round_trip():
    s = BlobStore()
    k = BlobKey("run", "O_i")
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    s.put(k, m)
    assert np.array_equal(s.get(k), m)
    assert k in s and len(s) == 1


def test_store_is_write_once():
    s = BlobStore()
    k = BlobKey("run", "x")
    s.put(k, [[1.0]])
    with pytest.raises(DuplicateKey):
        s.put(k, [[2.0]])
    assert s.get(k)[0, 0] == 1.0


def test_missing_key():
    with pytest.raises(MissingKey):
        BlobStore().get(BlobKey("run", "nope"))


def test_stored_value_is_insulated_from_caller():
    s = BlobStore()
    m = np.zeros((2, 2))
    s.put(BlobKey("r", "m"), m)
    m[0, 0] = 9.0
    got = s.get(BlobKey("r", "m"))
    assert got[0, 0] == 0.0
    with pytest.raises(ValueError):
        got[0, 0] = 1.0


def test_concurrent_readers_see_identical_bytes(rng):
    s = BlobStore()
    key = BlobKey("run", "shared")
    payload = rng.standard_normal((200, 300))
    s.put(key, payload)
    expected = serialize_matrix(payload)
    seen, errors = [], []
    start = threading.Barrier(11)

    def reader():
        start.wait()
        for _ in range(20):
            seen.append(s.get_bytes(key))

    def writer():
        start.wait()
        try:
            for i in range(200):
                s.put(BlobKey("run", f"other.{i}"), rng.standard_normal((20, 20)))
        except Exception as exc:  # pragma: no cover - reported below
            errors.append(exc)

    threads = [threading.Thread(target=reader) for _ in range(10)] + [threading.Thread(target=writer)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(seen) == 200
    assert all(b == expected for b in seen)


def test_namespaces_and_dump(tmp_path):
    s = BlobStore()
    s.put(BlobKey("a", "x"), [[1.0]])
    s.put(BlobKey("a", "y"), [[2.0, 3.0]])
    s.put(BlobKey("b", "x"), [[4.0]])
    assert {k.name for k in s.keys("a")} == {"x", "y"}
    paths = s.dump(tmp_path, "a")
    assert len(paths) == 2
    assert np.array_equal(load_blob_file(tmp_path / "a" / "y.sidm"), [[2.0, 3.0]])
    assert s.drop_namespace("a") == 2
    assert len(s) == 1
