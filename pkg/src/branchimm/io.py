"""CSV and binary serialization of simulation batches and result tables."""
from __future__ import annotations

import csv
import hashlib
import io
import struct

import numpy as np

MAGIC = b"BIMMBAT\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")


def batch_csv(counts, snapshots):
    """Long-format CSV with columns ``replicate, snapshot_t, type, count``."""
    counts = np.asarray(counts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "snapshot_t", "type", "count"])
    n_rep, n_snap, d = counts.shape
    for r in range(n_rep):
        for q in range(n_snap):
            t = repr(float(snapshots[q]))
            for i in range(d):
                w.writerow([r, t, i, int(counts[r, q, i])])
    return buf.getvalue()


def write_batch_binary(path, counts, snapshots):
    """Header ``magic, version, d, n_replicates, n_snapshots``, then float64
    snapshot times and int64 counts in ``(replicate, snapshot, type)`` order,
    all little-endian."""
    counts = np.ascontiguousarray(counts, dtype="<i8")
    n_rep, n_snap, d = counts.shape
    snaps = np.asarray(snapshots, dtype="<f8")
    if snaps.shape != (n_snap,):
        raise ValueError("one snapshot time per snapshot column")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, n_rep, n_snap))
        fh.write(snaps.tobytes())
        fh.write(counts.tobytes())


def read_batch_binary(path):
    """Inverse of ``write_batch_binary``: returns ``(counts, snapshots)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, n_rep, n_snap = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not a batch file")
    if version != VERSION:
        raise ValueError(f"unsupported batch version {version}")
    off = _HEADER.size
    snaps = np.frombuffer(raw, dtype="<f8", count=n_snap, offset=off)
    off += 8 * n_snap
    counts = np.frombuffer(raw, dtype="<i8", count=n_rep * n_snap * d, offset=off)
    if off + counts.nbytes != len(raw):
        raise ValueError("batch file has trailing or missing bytes")
    return counts.reshape(n_rep, n_snap, d).astype(np.int64), snaps.astype(float)


def table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
