"""Triadic motif adjacencies and channel matrices over the social graph.

The directed social matrix splits into reciprocal (B) and one-way (U)
parts; ten motif adjacencies are then assembled from sparse products of
B, U and the interaction matrix R, and grouped into three channels:

* social   A_s = sum of motifs 1..7 (triangle patterns),
* joint    A_j = motifs 8 + 9 (socially connected co-purchasers),
* purchase A_p = motif 10 minus A_j (co-purchase without a social tie).

Everything stays in CSR; Hadamard masks ride on scipy's sparse multiply so
the dense products are never materialized. ``brute_force_motif_count`` is
the independent check: it counts ordered node triples (and co-purchases)
directly from the raw edge sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Per-motif build plans. A triangle term (P, Q, M) contributes
# sum_w P[u,w] * Q[w,v] masked by M[u,v]; names refer to B, U, U^T.
# Co-purchase motifs mask the shared-item count instead.
_TRIANGLE_TERMS = {
    1: [("U", "U", "Ut")],
    2: [("B", "U", "Ut"), ("U", "B", "Ut"), ("U", "U", "B")],
    3: [("B", "B", "U"), ("B", "U", "B"), ("U", "B", "B")],
    4: [("B", "B", "B")],
    5: [("U", "U", "U"), ("U", "Ut", "U"), ("Ut", "U", "U")],
    6: [("U", "B", "U"), ("B", "Ut", "Ut"), ("Ut", "U", "B")],
    7: [("Ut", "B", "Ut"), ("B", "U", "U"), ("U", "Ut", "B")],
}
_COPURCHASE_MASK = {8: "B", 9: "U", 10: None}
_SYMMETRIZE = {1, 2, 3, 5, 9}  # A = C + C^T; the rest use A = C

MOTIF_IDS = tuple(range(1, 11))
CHANNELS = ("s", "j", "p")


@dataclass
class MotifSet:
    """All motif adjacencies plus the three channel matrices and degrees."""

    B: sp.csr_matrix
    U: sp.csr_matrix
    A_m: dict  # motif id -> csr
    A_s: sp.csr_matrix
    A_j: sp.csr_matrix
    A_p: sp.csr_matrix
    Dv_s: np.ndarray
    Dv_j: np.ndarray
    Dv_p: np.ndarray

    def channel(self, name):
        return {"s": self.A_s, "j": self.A_j, "p": self.A_p}[name]

    def degrees(self, name):
        return {"s": self.Dv_s, "j": self.Dv_j, "p": self.Dv_p}[name]


def _canon(m):
    m = sp.csr_matrix(m)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def binarize(m):
    """0/1 copy of a sparse matrix's nonzero pattern."""
    m = _canon(m)
    out = m.copy()
    out.data = np.ones_like(out.data)
    return out


def zero_diagonal(m):
    coo = sp.coo_matrix(m)
    keep = coo.row != coo.col
    return _canon(sp.csr_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=m.shape))


def split_social(S):
    """Split a directed social matrix into reciprocal B and one-way U parts.

    B[u,v] = 1 iff both directions are present; U = binarized(S) - B, so U
    carries no reciprocal pair (U and U^T have disjoint support).
    """
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"social matrix must be square, got {S.shape}")
    Sb = binarize(zero_diagonal(S))
    B = _canon(Sb.multiply(Sb.T))
    U = _canon(Sb - B)
    return B, U


def motif_adjacency(k, B, U, R):
    """Adjacency of motif ``k`` per the B/U/R product table, diagonal zeroed.

    Inputs are reduced to their nonzero patterns first, so results are
    exact integer counts whatever weights ride on the matrices.
    """
    if k not in MOTIF_IDS:
        raise ValueError(f"motif id must be in 1..10, got {k}")
    B = binarize(B)
    U = binarize(U)
    ops = {"B": B, "U": U, "Ut": _canon(U.T)}
    if k in _TRIANGLE_TERMS:
        C = sp.csr_matrix(B.shape)
        for p, q, m in _TRIANGLE_TERMS[k]:
            C = C + (ops[p] @ ops[q]).multiply(ops[m])
    else:
        co = binarize(R)
        co = co @ co.T  # shared-item counts
        mask = _COPURCHASE_MASK[k]
        C = co.multiply(ops[mask]) if mask else co
    A = C + C.T if k in _SYMMETRIZE else C
    return zero_diagonal(A)


def channel_adjacencies(B, U, R):
    """Assemble all motif adjacencies and the three channel matrices.

    ``A_p`` is clamped at zero elementwise after the subtraction as a
    safety net; with a clean B/U split the subtraction is already
    non-negative.
    """
    A_m = {k: motif_adjacency(k, B, U, R) for k in MOTIF_IDS}
    A_s = _canon(sum(A_m[k] for k in range(1, 8)))
    A_j = _canon(A_m[8] + A_m[9])
    A_p = A_m[10] - A_j
    A_p.data = np.maximum(A_p.data, 0.0)
    A_p = zero_diagonal(A_p)
    return MotifSet(
        B=binarize(B),
        U=binarize(U),
        A_m=A_m,
        A_s=A_s,
        A_j=A_j,
        A_p=A_p,
        Dv_s=np.asarray(A_s.sum(axis=1)).ravel(),
        Dv_j=np.asarray(A_j.sum(axis=1)).ravel(),
        Dv_p=np.asarray(A_p.sum(axis=1)).ravel(),
    )


def motifs_from_dataset(dataset):
    B, U = split_social(dataset.S)
    return channel_adjacencies(B, U, dataset.R)


def row_normalize(A):
    """Scale each nonzero row to sum 1; all-zero rows stay all-zero."""
    A = _canon(A)
    if A.nnz and A.data.min() < 0:
        raise ValueError("row_normalize expects non-negative entries")
    sums = np.asarray(A.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums, dtype=np.float64),
                    where=sums > 0)
    return _canon(sp.diags(inv) @ A)


def normalized_channels(motifs):
    """Channel name -> row-normalized adjacency, ready for propagation."""
    return {c: row_normalize(motifs.channel(c)) for c in CHANNELS}


# ---------------------------------------------------------------------------
# enumeration oracle

_BRUTE_FORCE_LIMIT = 64


def brute_force_motif_count(social_edges, rating_edges, k, n_users, n_items=None):
    """Dense motif counts by direct enumeration over ordered node triples.

    ``social_edges`` are directed (u, v) pairs, ``rating_edges`` are
    (user, item) pairs. Independent of the sparse path: edge predicates are
    read straight off the raw edge sets and triples are summed explicitly.
    Guarded to small graphs.
    """
    if n_users > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute-force oracle is guarded to n <= {_BRUTE_FORCE_LIMIT}")
    if k not in MOTIF_IDS:
        raise ValueError(f"motif id must be in 1..10, got {k}")

    has = {(u, v) for u, v in social_edges if u != v}
    b = np.zeros((n_users, n_users))
    u_ = np.zeros((n_users, n_users))
    for s, t in has:
        if (t, s) in has:
            b[s, t] = 1.0
        else:
            u_[s, t] = 1.0
    preds = {"B": b, "U": u_, "Ut": u_.T}

    if k in _TRIANGLE_TERMS:
        C = np.zeros((n_users, n_users))
        for p, q, m in _TRIANGLE_TERMS[k]:
            # C[x,y] += #middle nodes w with P[x,w] and Q[w,y], gated by M[x,y]
            C += np.einsum("xw,wy,xy->xy", preds[p], preds[q], preds[m])
    else:
        owned = [set() for _ in range(n_users)]
        for user, item in set(rating_edges):
            owned[user].add(item)
        C = np.zeros((n_users, n_users))
        for x in range(n_users):
            for y in range(n_users):
                if x == y:
                    continue
                C[x, y] = len(owned[x] & owned[y])
        mask = _COPURCHASE_MASK[k]
        if mask:
            C *= preds[mask]
    A = C + C.T if k in _SYMMETRIZE else C
    np.fill_diagonal(A, 0.0)
    return A


# ---------------------------------------------------------------------------
# inspection dumps

def degree_stats(motifs):
    """Per-channel degree summaries for the motif dump."""
    out = {}
    for c in CHANNELS:
        d = motifs.degrees(c)
        nz = motifs.channel(c).getnnz(axis=1)
        out[c] = {
            "n_nodes": int(d.shape[0]),
            "nonzero_rows": int((nz > 0).sum()),
            "total_weight": float(d.sum()),
            "max_degree": float(d.max()) if d.size else 0.0,
            "mean_degree": float(d.mean()) if d.size else 0.0,
            "neighbor_count_histogram": {
                str(kk): int(vv) for kk, vv in zip(*np.unique(nz, return_counts=True))
            },
        }
    return out
