"""Per-channel user encoding and item propagation.

Channel encoding iterates the row-stochastic channel adjacency over the
user embeddings and averages the layer outputs; users with no motif
neighbors keep their own row at every layer. Item representations are the
mean of their interacting users' final representations.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .motifs import row_normalize
from .util import count


def init_embeddings(n, d, rng):
    """Scaled-uniform init in [-a, a], a = sqrt(6 / (n + d))."""
    a = np.sqrt(6.0 / (n + d))
    return rng.uniform(-a, a, size=(n, d))


def propagation_operator(adj_norm):
    """Row-normalized adjacency with identity rows patched in at zero-degree
    nodes, so propagation falls back to the node's own embedding."""
    adj_norm = sp.csr_matrix(adj_norm)
    sums = np.asarray(adj_norm.sum(axis=1)).ravel()
    fallback = sp.diags((sums == 0).astype(np.float64))
    out = sp.csr_matrix(adj_norm + fallback)
    out.sort_indices()
    return out


def propagate_channel(adj_norm, H):
    """One propagation step: out[u] = sum_v adj[u,v] H[v], self-fallback on
    zero-degree rows."""
    op = propagation_operator(adj_norm)
    return apply_operator(op, H)


def apply_operator(op, H):
    """Counted sparse-times-dense product used by every propagation step."""
    if op.shape[1] != np.shape(H)[0]:
        raise ValueError(f"adjacency {op.shape} does not match H {np.shape(H)}")
    count("sparse_products")
    out = ad.spmm(op, ad.as_tensor(H))
    return ad.unwrap(out, H)


def encode_channels(P0, adjacencies, depth):
    """Iterate propagation per channel and average layers 0..depth.

    ``adjacencies`` maps channel name to a *row-normalized* adjacency.
    Returns channel name -> common representation, same shape as P0.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    ops = {c: propagation_operator(a) for c, a in adjacencies.items()}
    return encode_channels_prepared(P0, ops, depth)


def encode_channels_prepared(P0, ops, depth):
    """Same as :func:`encode_channels` with prebuilt propagation operators."""
    out = {}
    for c, op in ops.items():
        layers = [ad.as_tensor(P0)]
        for _ in range(depth):
            layers.append(apply_operator(op, layers[-1]))
        acc = layers[0]
        for layer in layers[1:]:
            acc = acc + layer
        out[c] = ad.unwrap(acc * (1.0 / len(layers)), P0)
    return out


def item_operator(R):
    """Row-normalized R^T: item representation = mean of its users' rows.

    Items with no interactions keep all-zero rows; the count of such items
    is exposed on the returned operator tuple.
    """
    Rt = sp.csr_matrix(R).T
    norm = row_normalize(sp.csr_matrix(Rt))
    empty = int((np.asarray(sp.csr_matrix(R).sum(axis=0)).ravel() == 0).sum())
    return norm, empty


def propagate_items(R, H):
    """Q[i] = mean over users who interacted with item i of H[u]."""
    op, _ = item_operator(R)
    count("sparse_products")
    out = ad.spmm(op, ad.as_tensor(H))
    return ad.unwrap(out, H)
