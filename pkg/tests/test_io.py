import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchimm.io import (MAGIC, batch_csv, read_batch_binary, sha256_file, table_csv,
                          write_batch_binary)


def test_batch_csv_layout():
    counts = np.array([[[1, 2], [3, 4]]])
    lines = batch_csv(counts, [0.5, 1.0]).splitlines()
    assert lines[0] == "replicate,snapshot_t,type,count"
    assert lines[1:] == ["0,0.5,0,1", "0,0.5,1,2", "0,1.0,0,3", "0,1.0,1,4"]


@settings(max_examples=30, deadline=None)
@given(n_rep=st.integers(1, 6), n_snap=st.integers(1, 4), d=st.integers(1, 3),
       seed=st.integers(0, 2**31))
def test_binary_roundtrip(tmp_path_factory, n_rep, n_snap, d, seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 2**40, size=(n_rep, n_snap, d))
    snaps = np.sort(rng.uniform(0, 10, n_snap))
    path = tmp_path_factory.mktemp("b") / "batch.bin"
    write_batch_binary(path, counts, snaps)
    back, s = read_batch_binary(path)
    np.testing.assert_array_equal(back, counts)
    np.testing.assert_array_equal(s, snaps)


def test_binary_header(tmp_path):
    path = tmp_path / "b.bin"
    write_batch_binary(path, np.zeros((2, 1, 3), dtype=int), [1.0])
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    assert int.from_bytes(raw[8:12], "little") == 1  # version
    assert int.from_bytes(raw[12:16], "little") == 3  # d
    assert int.from_bytes(raw[16:24], "little") == 2  # replicates
    assert int.from_bytes(raw[24:32], "little") == 1  # snapshots
    assert len(raw) == 32 + 8 + 2 * 3 * 8


def test_binary_rejects_corruption(tmp_path):
    path = tmp_path / "b.bin"
    write_batch_binary(path, np.ones((1, 1, 1), dtype=int), [1.0])
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError):
        read_batch_binary(path)
    path.write_bytes(b"NOTABATC" + b"\0" * 40)
    with pytest.raises(ValueError):
        read_batch_binary(path)
    with pytest.raises(ValueError):
        write_batch_binary(path, np.ones((1, 2, 1), dtype=int), [1.0])


def test_table_csv_exact_floats():
    text = table_csv(["a", "b"], [(0.1, "x"), (1 / 3, 2)])
    assert text.splitlines()[2] == "0.3333333333333333,2"


def test_sha256(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
