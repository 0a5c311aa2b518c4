import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from athv.container import (container_write, container_read, write_file, read_file,
                            ContainerError, MAGIC)


def test_empty_container_is_ten_byte_header():
    blob = container_write({})
    assert len(blob) == 10
    assert blob[:4] == MAGIC
    assert container_read(blob) == {}


def test_round_trip_preserves_bits_and_order():
    rng = np.random.default_rng(0)
    entries = {
        "image": rng.normal(size=(5, 7)).astype(np.float32),
        "kspace": rng.normal(size=(2, 2, 4, 4)).astype(np.float64),
        "scalarish": np.array([1.5], dtype=np.float32),
    }
    back = container_read(container_write(entries))
    assert list(back) == list(entries)
    for k in entries:
        assert back[k].dtype == entries[k].dtype
        assert back[k].shape == entries[k].shape
        assert back[k].tobytes() == entries[k].tobytes()


def test_zero_rank_tensor_round_trips():
    back = container_read(container_write({"eta": np.array(1.0, dtype=np.float32)}))
    assert back["eta"].shape == ()
    assert back["eta"] == np.float32(1.0)


def test_file_round_trip(tmp_path):
    path = tmp_path / "t.athv"
    entries = {"a": np.arange(6, dtype=np.float32).reshape(2, 3)}
    write_file(path, entries)
    assert np.array_equal(read_file(path)["a"], entries["a"])


def test_bad_magic_rejected():
    blob = b"NOPE" + container_write({})[4:]
    with pytest.raises(ContainerError):
        container_read(blob)


def test_bad_version_rejected():
    blob = bytearray(container_write({}))
    blob[4] = 99
    with pytest.raises(ContainerError):
        container_read(bytes(blob))


def test_truncated_payload_rejected():
    blob = container_write({"a": np.ones((4, 4), dtype=np.float32)})
    with pytest.raises(ContainerError, match="truncated"):
        container_read(blob[:-8])


def test_trailing_garbage_rejected():
    blob = container_write({"a": np.ones(2, dtype=np.float32)})
    with pytest.raises(ContainerError, match="trailing"):
        container_read(blob + b"x")


def test_duplicate_names_rejected():
    with pytest.raises(ContainerError, match="duplicate"):
        container_write([("a", np.zeros(1, dtype=np.float32)),
                         ("a", np.ones(1, dtype=np.float32))])


def test_unsupported_dtype_rejected():
    with pytest.raises(ContainerError):
        container_write({"a": np.zeros(3, dtype=np.int32)})


@given(st.lists(st.sampled_from(["f4", "f8"]), min_size=0, max_size=4),
       st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_round_trip_property(dtypes, seed):
    rng = np.random.default_rng(seed)
    entries = {}
    for i, d in enumerate(dtypes):
        rank = int(rng.integers(0, 4))
        shape = tuple(int(v) for v in rng.integers(1, 5, size=rank))
        entries[f"entry{i}"] = rng.normal(size=shape).astype(d)
    back = container_read(container_write(entries))
    assert list(back) == list(entries)
    for k in entries:
        assert back[k].tobytes() == entries[k].tobytes()
        assert back[k].shape == entries[k].shape
