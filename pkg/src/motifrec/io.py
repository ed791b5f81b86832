"""File formats: binary matrix dumps, coordinate-text matrices, JSON lines."""

from __future__ import annotations

import json
import struct

import numpy as np
import scipy.sparse as sp

_MAGIC = b"MRECMAT1"


def save_matrix(path, matrix):
    """Write a dense matrix: magic, rows, cols, then row-major float64 (LE)."""
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError("only 2-D matrices are dumped")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a matrix dump (bad magic {magic!r})")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"{path}: truncated matrix payload")
    return data.reshape(rows, cols).astype(np.float64)


def save_coo_text(path, matrix):
    """Sparse matrix as 'row col value' lines, sorted, with a shape header."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


def load_coo_text(path):
    rows, cols, vals = [], [], []
    shape = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                if len(parts) == 4 and parts[1] == "shape":
                    shape = (int(parts[2]), int(parts[3]))
                continue
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    if shape is None:
        raise ValueError(f"{path}: missing shape header")
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def append_jsonl(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
