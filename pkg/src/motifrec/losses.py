"""Loss components: in-batch InfoNCE across channels, two-level mutual
information within channels, pairwise ranking, and the joint objective.

All losses average over the batch so the auxiliary coefficients stay
batch-size-robust; shuffled negatives always come from an injected seeded
generator (or explicitly pinned permutations in tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import as_tensor, unwrap

# InfoNCE pair orientation for the three-channel case; subsets inherit it.
CONTRAST_PAIRS = (("s", "j"), ("s", "p"), ("p", "j"))


@dataclass
class SslConfig:
    tau: float = 0.5
    beta1: float = 0.01
    beta2: float = 0.001
    lambda_reg: float = 0.03
    shuffle_mode: str = "row"  # row | column
    reduction: str = "mean"    # mean | sum

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.shuffle_mode not in ("row", "column"):
            raise ValueError(f"bad shuffle_mode {self.shuffle_mode!r}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"bad reduction {self.reduction!r}")


@dataclass
class LossReport:
    """Per-step (or per-epoch accumulated) loss components."""

    l_r: float
    l_s11: float
    l_s12: float
    l_2: float
    beta1: float
    beta2: float

    @property
    def l_1(self):
        return self.l_s11 + self.l_s12

    @property
    def total(self):
        return self.l_r + self.beta1 * self.l_1 + self.beta2 * self.l_2

    def as_dict(self):
        return {
            "l_r": self.l_r,
            "l_s11": self.l_s11,
            "l_s12": self.l_s12,
            "l_1": self.l_1,
            "l_2": self.l_2,
            "L": self.total,
        }


def _reduce(x, reduction):
    return ad.mean_(x) if reduction == "mean" else ad.sum_(x)


def infonce_batch(Hi, Hj, tau, reduction="mean"):
    """In-batch InfoNCE: aligned rows are positives, every row of the other
    channel is a negative; log-sum-exp stabilized."""
    Hi_t, Hj_t = as_tensor(Hi), as_tensor(Hj)
    if Hi_t.value.shape != Hj_t.value.shape:
        raise ValueError("paired batches must share a shape")
    if Hi_t.value.shape[0] == 0:
        raise ValueError("empty batch")
    scores = (Hi_t @ ad.transpose(Hj_t)) * (1.0 / tau)
    pos = ad.rowwise_dot(Hi_t, Hj_t) * (1.0 / tau)
    per_row = ad.logsumexp(scores, axis=1) - pos
    return unwrap(_reduce(per_row, reduction), Hi, Hj)


def cross_channel_contrast(H_s, H_j, H_p, tau, reduction="mean"):
    """Sum of the three pairwise InfoNCE terms over channel batches."""
    reps = {"s": H_s, "j": H_j, "p": H_p}
    return contrast_over_channels(reps, tau, reduction)


def contrast_over_channels(reps, tau, reduction="mean"):
    """Pairwise InfoNCE over whatever channels are present (ablations)."""
    acc = None
    for a, b in CONTRAST_PAIRS:
        if a not in reps or b not in reps:
            continue
        term = as_tensor(infonce_batch(reps[a], reps[b], tau, reduction))
        acc = term if acc is None else acc + term
    if acc is None:
        raise ValueError("need at least two channels to contrast")
    return unwrap(acc, *reps.values())


def _derangement(n, rng):
    """Uniform random permutation, retried toward having no fixed point."""
    p = np.arange(n)
    if n < 2:
        return p
    for _ in range(100):
        p = rng.permutation(n)
        if not np.any(p == np.arange(n)):
            break
    return p


def _column_perm(shape, rng):
    return np.stack([rng.permutation(shape[0]) for _ in range(shape[1])], axis=1)


def draw_shuffle(shape, mode, rng):
    """Permutation indices for one negative-shuffle draw."""
    if mode == "row":
        return _derangement(shape[0], rng)
    return _column_perm(shape, rng)


def _apply_shuffle(H_t, perm):
    if np.ndim(perm) == 1:
        return ad.take_rows(H_t, perm)
    return ad.take_along_rows(H_t, perm)


def shuffle_negatives(H, mode, rng):
    """Shuffled copy of a batch: whole rows ('row') or each column
    independently ('column')."""
    H_t = as_tensor(H)
    perm = draw_shuffle(H_t.value.shape, mode, rng)
    return unwrap(_apply_shuffle(H_t, perm), H)


def hmim_channel(H, ego, rng=None, shuffle_mode="row", reduction="mean",
                 perms=None, ego_includes_self=False):
    """Two-level mutual-information loss inside one channel batch.

    ``ego`` holds batch-local neighbor weights (no diagonal); the node
    itself joins its ego-network with weight 1 (pass a prebuilt operator
    with ``ego_includes_self=True`` to skip the identity add). Level one
    discriminates a node against its ego summary, level two the ego
    summary against the batch average, both against shuffled negatives.
    """
    H_t = as_tensor(H)
    b = H_t.value.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    if ego is None:
        ego_op = sp.identity(b, format="csr")
    elif ego_includes_self:
        ego_op = ego
    else:
        ego_op = sp.csr_matrix(ego) + sp.identity(b, format="csr")
    z = ad.spmm(ego_op, H_t)
    z_graph = ad.mean_(H_t, axis=0, keepdims=True)

    if perms is None:
        if rng is None:
            raise ValueError("need rng or pinned perms for negative shuffling")
        perms = (draw_shuffle(H_t.value.shape, shuffle_mode, rng),
                 draw_shuffle(H_t.value.shape, shuffle_mode, rng))
    h_neg = _apply_shuffle(H_t, perms[0])
    z_neg = _apply_shuffle(z, perms[1])

    node_score = ad.rowwise_dot(H_t, z) - ad.rowwise_dot(h_neg, z)
    graph_score = (ad.sum_(z * z_graph, axis=1)
                   - ad.sum_(z_neg * z_graph, axis=1))
    per_node = ad.logsigmoid(node_score) + ad.logsigmoid(graph_score)
    return unwrap(-_reduce(per_node, reduction), H)


def aux1_loss(matching, ego, cfg, rng=None, perms=None):
    """Hierarchical SSL over matching representations: cross-channel
    InfoNCE plus per-channel mutual information (auxiliary task 1)."""
    l_s11 = as_tensor(contrast_over_channels(matching, cfg.tau, cfg.reduction))
    l_s12 = None
    for c in matching:
        term = as_tensor(hmim_channel(
            matching[c], ego.get(c) if ego else None, rng,
            shuffle_mode=cfg.shuffle_mode, reduction=cfg.reduction,
            perms=None if perms is None else perms[c]))
        l_s12 = term if l_s12 is None else l_s12 + term
    return unwrap(l_s11 + l_s12, *matching.values())


def aux2_loss(common, ego, cfg, rng=None, perms=None):
    """Per-channel mutual information over common representations
    (auxiliary task 2)."""
    acc = None
    for c in common:
        term = as_tensor(hmim_channel(
            common[c], ego.get(c) if ego else None, rng,
            shuffle_mode=cfg.shuffle_mode, reduction=cfg.reduction,
            perms=None if perms is None else perms[c]))
        acc = term if acc is None else acc + term
    return unwrap(acc, *common.values())


def bpr_loss(h_u, q_i, q_j, reg_embeddings=(), lambda_reg=0.0, reduction="mean"):
    """Pairwise ranking loss over sampled (user, owned, unowned) triples.

    ``reg_embeddings`` are the per-triple vectors whose squared norms make
    up the L2 term (the user base embeddings and the two item vectors of
    each triple).
    """
    hu, qi, qj = _rows2(h_u), _rows2(q_i), _rows2(q_j)
    margin = ad.rowwise_dot(hu, qi) - ad.rowwise_dot(hu, qj)
    per_triple = -ad.logsigmoid(margin)
    if lambda_reg and reg_embeddings:
        for vec in reg_embeddings:
            per_triple = per_triple + lambda_reg * ad.sum_(_rows2(vec) * _rows2(vec), axis=1)
    return unwrap(_reduce(per_triple, reduction), h_u, q_i, q_j, *reg_embeddings)


def _rows2(v):
    t = as_tensor(v)
    if t.value.ndim == 1:
        return ad.reshape(t, (1, -1))
    return t


def joint_loss(l_r, l_1, l_2, cfg):
    """L = l_r + beta1 * l_1 + beta2 * l_2."""
    out = as_tensor(l_r) + cfg.beta1 * as_tensor(l_1) + cfg.beta2 * as_tensor(l_2)
    return unwrap(out, l_r, l_1, l_2)


def direct_contrast_loss(common, mode, tau, margin=1.0, rng=None,
                         perms=None, reduction="mean"):
    """Direct cross-channel contrast on the common representations.

    'infonce' reuses the pairwise in-batch InfoNCE; 'triplet' hinges the
    aligned-row distance against a shuffled-row distance per channel pair.
    """
    if mode == "infonce":
        return contrast_over_channels(common, tau, reduction)
    if mode != "triplet":
        raise ValueError(f"bad direct-contrast mode {mode!r}")
    acc = None
    for idx, (a, b) in enumerate(CONTRAST_PAIRS):
        if a not in common or b not in common:
            continue
        Ha, Hb = as_tensor(common[a]), as_tensor(common[b])
        if perms is None:
            if rng is None:
                raise ValueError("triplet mode needs rng or pinned perms")
            perm = _derangement(Ha.value.shape[0], rng)
        else:
            perm = perms[idx]
        Hb_neg = ad.take_rows(Hb, perm)
        pos = _row_distance(Ha, Hb)
        neg = _row_distance(Ha, Hb_neg)
        hinge = ad.relu(pos - neg + margin)
        term = _reduce(hinge, reduction)
        acc = term if acc is None else acc + term
    if acc is None:
        raise ValueError("need at least two channels to contrast")
    return unwrap(acc, *common.values())


def _row_distance(A, B):
    diff = A - B
    return ad.sqrt(ad.clip_min(ad.sum_(diff * diff, axis=1), 1e-24))
