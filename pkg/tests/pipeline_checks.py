"""Shared helpers for full-pipeline gradient checks.

Finite differences need the loss to be smooth around the evaluation point,
so instances are screened for margin from the two kink sources (the
clamped attention cosines and the hinge-free norms); the frozen seed lists
in the tests were produced with ``screen_seeds``.
"""

import numpy as np

from motifrec import autodiff as ad
from motifrec.encoder import encode_channels_prepared
from motifrec.losses import SslConfig, draw_shuffle
from motifrec.matching import cross_attention_transition, ego_aggregate
from motifrec.trainer import CmhcModel, ModelParams, TrainConfig, sample_bpr_triples
from motifrec.util import rng_streams

from conftest import toy_dataset


def build_instance(seed, n_users=12, n_items=8, d=6, depth=2, batch=10):
    """Deterministic small model + pinned triples and shuffle permutations."""
    dataset = toy_dataset(n_users=n_users, n_items=n_items, per_user=4,
                          social=40, seed=seed)
    cfg = TrainConfig(dim=d, depth=depth, l_views=d, attention_scope="full",
                      seed=seed, epochs=1, batch_size=batch)
    ssl = SslConfig()
    params = ModelParams.init(dataset.n_users, cfg, rng_streams(seed)["init"])
    model = CmhcModel(dataset, cfg, ssl, params)

    rng = np.random.default_rng(seed + 977)
    triples = sample_bpr_triples(dataset, batch, rng)
    batch_users = np.unique([t[0] for t in triples])
    b = len(batch_users)
    perms = {
        "matching": {c: (draw_shuffle((b, d), "row", rng),
                         draw_shuffle((b, d), "row", rng)) for c in model.channels},
        "common": {c: (draw_shuffle((b, d), "row", rng),
                       draw_shuffle((b, d), "row", rng)) for c in model.channels},
        "direct": [draw_shuffle((b, d), "row", rng) for _ in range(3)],
    }
    return model, triples, perms


def loss_values(model, triples, perms):
    """All loss components from one fresh forward, as plain floats."""
    out = model.forward()
    _, components, _ = model.batch_losses(out, triples, perms=perms, force_aux=True)
    return {k: float(v.value) for k, v in components.items()}


def loss_components(model, triples, perms):
    out = model.forward()
    _, components, _ = model.batch_losses(out, triples, perms=perms, force_aux=True)
    return components


def analytic_grads(model, triples, perms):
    """Per-component parameter gradients from the tape."""
    grads = {}
    components = loss_components(model, triples, perms)
    for name, comp in components.items():
        for t in model.params.tensors.values():
            t.grad = None
        ad.backward(comp)
        grads[name] = {pname: ad.grad_of(t).copy()
                       for pname, t in model.params.tensors.items()}
    return grads


def kink_margin(model):
    """Distance of every clamp/fallback argument from its kink.

    Covers the attention cosine clamp, the row-norm floors and the
    multi-view denominators for all ordered channel pairs.
    """
    cfg = model.cfg
    P0 = model.params.P0.value
    common = encode_channels_prepared(P0, model.prop_ops, cfg.depth)
    weights = model.params.matching_weights(model.channels)
    margin = np.inf
    for i in model.channels:
        for l in model.channels:
            if i == l:
                continue
            W1 = weights.gcn1[(i, l)].value
            Wv = weights.view[(i, l)].value
            g1 = ego_aggregate(model.adj[i], common[i], W1)
            g2 = ego_aggregate(model.adj[l], common[l], W1)
            n1 = np.linalg.norm(g1, axis=1)
            n2 = np.linalg.norm(g2, axis=1)
            margin = min(margin, n1.min(), n2.min())
            cos = (g1 / n1[:, None]) @ (g2 / n2[:, None]).T
            margin = min(margin, np.abs(cos).min())
            trans = cross_attention_transition(g1, g2)
            W2sq = (Wv * Wv).T
            p1 = (g1 * g1) @ W2sq
            p2 = (trans * trans) @ W2sq
            margin = min(margin, np.sqrt(p1 * p2).min())
    return float(margin)


def screen_seeds(candidates, needed, min_margin=1e-3):
    """First ``needed`` seeds whose instances stay away from every kink."""
    good = []
    for seed in candidates:
        model, _, _ = build_instance(seed)
        if kink_margin(model) >= min_margin:
            good.append(seed)
        if len(good) == needed:
            break
    return good
