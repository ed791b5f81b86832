"""Cross-channel attentive matching.

For an ordered channel pair (i, l): both channels aggregate their
ego-networks (GCN#1, weights shared within the pair), channel l's rows are
blended into a transitional representation for every node of channel i via
non-negative cosine attention, a multi-view cosine match compares each
node's aggregate with its transitional vector, and a second ego aggregation
(GCN#2, weights per target channel) re-localizes the matching vectors. The
matching representation of a channel is the sum over the other channels'
contributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import as_tensor, unwrap
from .encoder import init_embeddings
from .util import count

_TINY = 1e-12


@dataclass
class MatchingWeights:
    """Trainable tensors of the matcher.

    ``gcn1`` and ``view`` are keyed by ordered channel pair, ``gcn2`` by the
    target channel. ``view`` rows are the per-view scalings of the matching
    function; with ``l_views == d`` the matching output feeds GCN#2 and the
    fusion stage without any projection.
    """

    gcn1: dict = field(default_factory=dict)   # (i, l) -> (d, d)
    view: dict = field(default_factory=dict)   # (i, l) -> (l_views, d)
    gcn2: dict = field(default_factory=dict)   # i -> (l_views, d)

    @classmethod
    def init(cls, channels, d, l_views, rng):
        w = cls()
        for i in channels:
            for l in channels:
                if i == l:
                    continue
                w.gcn1[(i, l)] = init_embeddings(d, d, rng)
                w.view[(i, l)] = init_embeddings(l_views, d, rng)
            w.gcn2[i] = init_embeddings(l_views, d, rng)
        return w


def ego_aggregate(adj_norm, H, W_g):
    """Self-inclusive ego aggregation: (adj @ H + H) @ W_g, no nonlinearity."""
    H_t, W_t = as_tensor(H), as_tensor(W_g)
    op = sp.csr_matrix(adj_norm)
    gathered = ad.spmm(op, H_t) + H_t
    out = gathered @ W_t
    return unwrap(out, H, W_g)


def cross_attention_transition(G1, G2, scope="full", indices=None, topk=64):
    """Blend rows of G2 into a transitional vector for every row of G1.

    Attention weights are cosine similarities clamped at zero and
    normalized to a convex combination; rows of G1 with no positive
    similarity fall back to their own vector. ``scope`` limits the
    candidate rows of G2: "full" uses all, "batch" uses ``indices``,
    "topk" keeps the ``topk`` largest weights per row.
    """
    G1_t, G2_t = as_tensor(G1), as_tensor(G2)
    if scope == "batch":
        if indices is None:
            raise ValueError("batch scope needs candidate indices")
        G2_t = ad.take_rows(G2_t, np.asarray(indices))
    elif scope not in ("full", "topk"):
        raise ValueError(f"unknown attention scope {scope!r}")

    alpha = ad.relu(_cosine_matrix(G1_t, G2_t))
    if scope == "topk" and topk < alpha.shape[1]:
        # keep the top-k weights per row; selection mask is constant
        av = alpha.value
        kth = np.partition(av, av.shape[1] - topk, axis=1)[:, av.shape[1] - topk]
        keep = av >= kth[:, None]
        alpha = ad.where(keep, alpha, as_tensor(np.zeros_like(av)))

    mass = ad.sum_(alpha, axis=1, keepdims=True)
    blended = (alpha @ G2_t) / ad.clip_min(mass, _TINY)
    has_mass = mass.value > _TINY
    out = ad.where(has_mass, blended, G1_t)
    return unwrap(out, G1, G2)


def _cosine_matrix(A, B):
    """Pairwise cosine of rows; all-zero rows yield zero similarity."""
    na = ad.sqrt(ad.sum_(A * A, axis=1, keepdims=True))
    nb = ad.sqrt(ad.sum_(B * B, axis=1, keepdims=True))
    An = A / ad.clip_min(na, _TINY)
    Bn = B / ad.clip_min(nb, _TINY)
    return An @ ad.transpose(Bn)


def multi_view_cosine_match(v1, v2, W):
    """Per-view cosine between elementwise-scaled copies of two vectors.

    Accepts single d-vectors or (n, d) row batches; returns the matching
    vector(s) with one entry per view. A view whose scaled vector has zero
    norm contributes 0.
    """
    single = as_tensor(v1).value.ndim == 1
    V1 = _rows(v1)
    V2 = _rows(v2)
    W_t = as_tensor(W)
    W2 = W_t * W_t  # (l, d) squared view scalings
    num = (V1 * V2) @ ad.transpose(W2)
    p1 = (V1 * V1) @ ad.transpose(W2)
    p2 = (V2 * V2) @ ad.transpose(W2)
    denom = ad.clip_min(ad.sqrt(p1) * ad.sqrt(p2), _TINY)
    m = num / denom
    if single:
        m = ad.reshape(m, (-1,))
    return unwrap(m, v1, v2, W)


def _rows(v):
    t = as_tensor(v)
    if t.value.ndim == 1:
        return ad.reshape(t, (1, -1))
    return t


def attentive_matching(H_i, H_l, adj_i, adj_l, W_g1, W_view, W_g2,
                       scope="full", indices=None, topk=64):
    """Transitional matching of channel l into channel i (one ordered pair)."""
    count("attm_evaluations")
    g1 = ego_aggregate(adj_i, H_i, W_g1)
    g2 = ego_aggregate(adj_l, H_l, W_g1)
    trans = cross_attention_transition(g1, g2, scope=scope, indices=indices, topk=topk)
    m = multi_view_cosine_match(g1, trans, W_view)
    out = ego_aggregate(adj_i, m, W_g2)
    return unwrap(as_tensor(out), H_i, H_l, W_g1, W_view, W_g2)


def matching_representations(common, adjacencies, weights,
                             scope="full", indices=None, topk=64):
    """Matching representation per channel: sum of the other channels'
    attentive-matching outputs."""
    channels = list(common)
    weight_arrays = (list(weights.gcn1.values()) + list(weights.view.values())
                     + list(weights.gcn2.values()))
    out = {}
    for i in channels:
        acc = None
        for l in channels:
            if l == i:
                continue
            part = attentive_matching(
                common[i], common[l], adjacencies[i], adjacencies[l],
                weights.gcn1[(i, l)], weights.view[(i, l)], weights.gcn2[i],
                scope=scope, indices=indices, topk=topk)
            part = as_tensor(part)
            acc = part if acc is None else acc + part
        out[i] = unwrap(acc, *common.values(), *weight_arrays)
    return out
