"""Hierarchical attention fusion of user representations.

Level one blends each channel's matching and common representations;
level two blends the per-channel results into the comprehensive user
representation. Both levels score candidates with a bilinear form
``a^T (W h)`` followed by a per-user softmax, with separate parameters per
level. Attention coefficients are exported for analysis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import as_tensor, unwrap
from .encoder import init_embeddings


@dataclass
class AttentionWeights:
    a1: np.ndarray      # (d,) within-channel
    W1: np.ndarray      # (d, d)
    a2: np.ndarray      # (d,) cross-channel
    W2: np.ndarray      # (d, d)

    @classmethod
    def init(cls, d, rng):
        return cls(
            a1=init_embeddings(1, d, rng).ravel(),
            W1=init_embeddings(d, d, rng),
            a2=init_embeddings(1, d, rng).ravel(),
            W2=init_embeddings(d, d, rng),
        )


def _scores(H, a, W):
    """Per-user attention logit a^T (W h)."""
    a2d = _as_col(a)
    return ad.reshape(H @ ad.transpose(as_tensor(W)) @ a2d, (-1,))


def _as_col(a):
    t = as_tensor(a)
    if t.value.ndim == 1:
        return ad.reshape(t, (-1, 1))
    return t


def within_channel_fuse(h_m, h_n, a, W):
    """Blend matching and common representations of one channel.

    Returns (fused, alpha) where alpha[:, 0] weights the matching rows and
    alpha[:, 1] the common rows. Accepts single vectors or row batches.
    """
    single = as_tensor(h_m).value.ndim == 1
    Hm, Hn = _rows2(h_m), _rows2(h_n)
    logits = ad.stack_cols([_scores(Hm, a, W), _scores(Hn, a, W)])
    alpha = ad.softmax(logits, axis=1)
    fused = ad.col(alpha, 0) * Hm + ad.col(alpha, 1) * Hn
    if single:
        fused = ad.reshape(fused, (-1,))
        alpha = ad.reshape(alpha, (-1,))
    return unwrap(fused, h_m, h_n, a, W), unwrap(alpha, h_m, h_n, a, W)


def cross_channel_fuse(per_channel, a, W):
    """Blend the per-channel user representations into one.

    ``per_channel`` maps channel name to (n, d) rows; returns (fused,
    alphas) with alphas keyed like the input and summing to 1 per user.
    """
    names = list(per_channel)
    rows = {c: _rows2(per_channel[c]) for c in names}
    logits = ad.stack_cols([_scores(rows[c], a, W) for c in names])
    alpha = ad.softmax(logits, axis=1)
    fused = None
    for k, c in enumerate(names):
        term = ad.col(alpha, k) * rows[c]
        fused = term if fused is None else fused + term
    inputs = list(per_channel.values()) + [a, W]
    alphas = {c: unwrap(ad.reshape(ad.col(alpha, k), (-1,)), *inputs)
              for k, c in enumerate(names)}
    return unwrap(fused, *inputs), alphas


def _rows2(v):
    t = as_tensor(v)
    if t.value.ndim == 1:
        return ad.reshape(t, (1, -1))
    return t


def export_attention(dataset, alphas, path):
    """Write per-user channel attention as CSV: user_id, alpha_s/j/p.

    Channels absent from ``alphas`` (ablations) get weight 0 so every row
    still sums to 1 over the active channels.
    """
    n = dataset.n_users
    cols = {}
    for c in ("s", "j", "p"):
        v = alphas.get(c)
        if v is None:
            cols[c] = np.zeros(n)
        else:
            cols[c] = np.asarray(v if not isinstance(v, ad.Tensor) else v.value).ravel()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "alpha_s", "alpha_j", "alpha_p"])
        for u in range(n):
            writer.writerow([dataset.user_ids[u],
                             repr(float(cols["s"][u])),
                             repr(float(cols["j"][u])),
                             repr(float(cols["p"][u]))])
    return path
