"""Joint training loop: forward assembly, triple sampling, reverse-mode
gradients, Adam updates, per-epoch evaluation.

The motif channel matrices are built once before the epoch loop. Each epoch
makes one pass over the training pairs in shuffled order; every batch
rebuilds the full representation pipeline (encoding, matching under
batch-scope attention, fusion, item propagation), computes the joint
objective and applies one Adam step. Everything is float64 and driven by
named random streams off one root seed.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import io as mio
from .autodiff import backward, grad_of, parameter
from .encoder import (apply_operator, encode_channels_prepared, init_embeddings,
                      item_operator, propagation_operator)
from .evaluate import evaluate
from .fusion import AttentionWeights, cross_channel_fuse, within_channel_fuse
from .losses import (LossReport, SslConfig, bpr_loss, contrast_over_channels,
                     direct_contrast_loss, hmim_channel)
from .matching import MatchingWeights, matching_representations
from .motifs import CHANNELS, motifs_from_dataset, normalized_channels
from .util import count, rng_streams, snapshot_counters

ABLATION_FLAGS = ("no_social", "no_joint", "no_purchase",
                  "no_matching", "no_matching_ssl")


class NonFiniteError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 2000
    dim: int = 50
    depth: int = 2
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    l_views: int = 0              # 0 -> same as dim
    attention_scope: str = "batch"  # full | batch | topk
    topk_k: int = 64
    ablations: tuple = ()
    direct_contrast: str = "off"  # off | triplet | infonce
    triplet_margin: float = 1.0
    eval_k: int = 10
    eval_scenario: str = "general"
    deterministic: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        bad = [a for a in self.ablations if a not in ABLATION_FLAGS]
        if bad:
            raise ValueError(f"unknown ablation flags {bad}")
        if self.direct_contrast not in ("off", "triplet", "infonce"):
            raise ValueError(f"bad direct_contrast {self.direct_contrast!r}")

    @property
    def views(self):
        return self.l_views if self.l_views else self.dim

    def active_channels(self):
        drop = {"no_social": "s", "no_joint": "j", "no_purchase": "p"}
        removed = {drop[a] for a in self.ablations if a in drop}
        active = tuple(c for c in CHANNELS if c not in removed)
        if not active:
            raise ValueError("all channels ablated away")
        return active

    @property
    def matching_enabled(self):
        return ("no_matching" not in self.ablations
                and self.direct_contrast == "off"
                and len(self.active_channels()) >= 2)

    @property
    def matching_ssl_enabled(self):
        return self.matching_enabled and "no_matching_ssl" not in self.ablations


class ModelParams:
    """All trainable tensors plus their Adam moment buffers."""

    def __init__(self, tensors):
        self.tensors = dict(tensors)
        self.adam_m = {k: np.zeros_like(t.value) for k, t in self.tensors.items()}
        self.adam_v = {k: np.zeros_like(t.value) for k, t in self.tensors.items()}
        self.step = 0

    @classmethod
    def init(cls, n_users, cfg, rng):
        channels = cfg.active_channels()
        d, views = cfg.dim, cfg.views
        tensors = {"P0": parameter(init_embeddings(n_users, d, rng), "P0")}
        if cfg.matching_enabled:
            raw = MatchingWeights.init(channels, d, views, rng)
            for key, val in raw.gcn1.items():
                tensors[f"gcn1:{key[0]}>{key[1]}"] = parameter(val)
            for key, val in raw.view.items():
                tensors[f"view:{key[0]}>{key[1]}"] = parameter(val)
            for key, val in raw.gcn2.items():
                tensors[f"gcn2:{key}"] = parameter(val)
            att = AttentionWeights.init(d, rng)
            tensors["att1_a"] = parameter(att.a1)
            tensors["att1_W"] = parameter(att.W1)
        if len(channels) > 1:
            att2 = AttentionWeights.init(d, rng)
            tensors["att2_a"] = parameter(att2.a2)
            tensors["att2_W"] = parameter(att2.W2)
        for name, t in tensors.items():
            t.name = name
        return cls(tensors)

    @property
    def P0(self):
        return self.tensors["P0"]

    def matching_weights(self, channels):
        w = MatchingWeights()
        for i in channels:
            for l in channels:
                if i != l:
                    w.gcn1[(i, l)] = self.tensors[f"gcn1:{i}>{l}"]
                    w.view[(i, l)] = self.tensors[f"view:{i}>{l}"]
            w.gcn2[i] = self.tensors[f"gcn2:{i}"]
        return w

    def values(self):
        return {k: t.value.copy() for k, t in self.tensors.items()}

    def load_values(self, values):
        for k, t in self.tensors.items():
            t.value = np.array(values[k], dtype=np.float64, copy=True)

    def assert_finite(self, where=""):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t.value)):
                raise NonFiniteError(f"non-finite values in parameter {name} {where}")


@dataclass
class ForwardOutput:
    common: dict
    matching: dict | None
    per_channel: dict
    h: object
    Q: object
    alpha_within: dict | None
    alpha_cross: dict


def _check_finite(name, tensor):
    if not np.all(np.isfinite(tensor.value)):
        raise NonFiniteError(f"non-finite values in tensor {name}")


class CmhcModel:
    """Holds the precomputed graph operators and runs the forward pipeline."""

    def __init__(self, dataset, cfg, ssl_cfg=None, params=None):
        self.dataset = dataset
        self.cfg = cfg
        self.ssl = ssl_cfg or SslConfig()
        self.channels = cfg.active_channels()
        motifs = motifs_from_dataset(dataset)
        self.motifs = motifs
        norm = normalized_channels(motifs)
        self.adj = {c: norm[c] for c in self.channels}
        self.prop_ops = {c: propagation_operator(self.adj[c]) for c in self.channels}
        self.item_op, self.items_without_interactions = item_operator(dataset.R)
        if params is None:
            params = ModelParams.init(dataset.n_users, cfg, np.random.default_rng(cfg.seed))
        self.params = params
        self.train_item_sets = dataset.train_items_by_user()

    def forward(self, scope_indices=None):
        cfg = self.cfg
        common = encode_channels_prepared(self.params.P0, self.prop_ops, cfg.depth)
        for c, t in common.items():
            _check_finite(f"H^n[{c}]", t)

        matching = None
        alpha_within = None
        per_channel = common
        if cfg.matching_enabled:
            scope = cfg.attention_scope
            if scope == "batch" and scope_indices is None:
                scope = "full"
            matching = matching_representations(
                common, self.adj, self.params.matching_weights(self.channels),
                scope=scope, indices=scope_indices, topk=cfg.topk_k)
            for c, t in matching.items():
                _check_finite(f"H^m[{c}]", t)
            per_channel = {}
            alpha_within = {}
            for c in self.channels:
                fused, alpha = within_channel_fuse(
                    matching[c], common[c],
                    self.params.tensors["att1_a"], self.params.tensors["att1_W"])
                per_channel[c] = fused
                alpha_within[c] = alpha

        if len(self.channels) > 1:
            h, alpha_cross = cross_channel_fuse(
                per_channel, self.params.tensors["att2_a"], self.params.tensors["att2_W"])
        else:
            only = self.channels[0]
            h = per_channel[only]
            alpha_cross = {only: np.ones(self.dataset.n_users)}
        _check_finite("h", h)
        Q = apply_operator(self.item_op, h)
        _check_finite("Q", Q)
        return ForwardOutput(common, matching, per_channel, h, Q,
                             alpha_within, alpha_cross)

    def batch_ego(self, batch_users):
        return {c: self.adj[c][batch_users, :][:, batch_users] for c in self.channels}

    def batch_losses(self, out, triples, rng=None, perms=None, force_aux=False):
        """Joint loss tensor plus per-component tensors for one batch.

        ``perms`` pins the negative-shuffle permutations for gradient
        checks: {"matching": {c: (perm_h, perm_z)}, "common": {...}}.
        ``force_aux`` computes the auxiliary terms even under zero betas.
        """
        cfg, ssl = self.cfg, self.ssl
        u_idx = np.array([t[0] for t in triples], dtype=np.int64)
        i_idx = np.array([t[1] for t in triples], dtype=np.int64)
        j_idx = np.array([t[2] for t in triples], dtype=np.int64)
        batch_users = np.unique(u_idx)

        h_u = ad.take_rows(out.h, u_idx)
        q_i = ad.take_rows(out.Q, i_idx)
        q_j = ad.take_rows(out.Q, j_idx)
        p_u = ad.take_rows(self.params.P0, u_idx)
        l_r = bpr_loss(h_u, q_i, q_j, reg_embeddings=(p_u, q_i, q_j),
                       lambda_reg=ssl.lambda_reg, reduction=ssl.reduction)

        zero = ad.as_tensor(0.0)
        l_s11, l_s12, l_2 = zero, zero, zero
        need_aux1 = (ssl.beta1 > 0 or force_aux) and (
            cfg.matching_ssl_enabled or cfg.direct_contrast != "off")
        need_aux2 = ssl.beta2 > 0 or force_aux
        ego = self.batch_ego(batch_users) if (need_aux1 or need_aux2) else None
        common_b = {c: ad.take_rows(out.common[c], batch_users) for c in self.channels}

        def pinned(group, c):
            return None if perms is None else perms[group][c]

        if need_aux1:
            if cfg.direct_contrast != "off":
                l_s11 = ad.as_tensor(direct_contrast_loss(
                    common_b, cfg.direct_contrast, ssl.tau,
                    margin=cfg.triplet_margin, rng=rng, reduction=ssl.reduction,
                    perms=None if perms is None else perms["direct"]))
            else:
                matching_b = {c: ad.take_rows(out.matching[c], batch_users)
                              for c in self.channels}
                if len(self.channels) >= 2:
                    l_s11 = ad.as_tensor(contrast_over_channels(
                        matching_b, ssl.tau, ssl.reduction))
                for c in self.channels:
                    term = ad.as_tensor(hmim_channel(
                        matching_b[c], ego[c], rng,
                        shuffle_mode=ssl.shuffle_mode, reduction=ssl.reduction,
                        perms=pinned("matching", c)))
                    l_s12 = l_s12 + term
        if need_aux2:
            for c in self.channels:
                term = ad.as_tensor(hmim_channel(
                    common_b[c], ego[c], rng,
                    shuffle_mode=ssl.shuffle_mode, reduction=ssl.reduction,
                    perms=pinned("common", c)))
                l_2 = l_2 + term

        l_1 = l_s11 + l_s12
        total = l_r + ssl.beta1 * l_1 + ssl.beta2 * l_2
        components = {"l_r": l_r, "l_s11": l_s11, "l_s12": l_s12,
                      "l_2": l_2, "L": total}
        report = LossReport(
            l_r=float(l_r.value), l_s11=float(l_s11.value),
            l_s12=float(l_s12.value), l_2=float(l_2.value),
            beta1=ssl.beta1, beta2=ssl.beta2)
        return total, components, report


def sample_negative(user, n_items, owned, rng, max_tries=100):
    """Uniform unowned item for a user, or None after ``max_tries``."""
    for _ in range(max_tries):
        j = int(rng.integers(n_items))
        if j not in owned:
            return j
    count("bpr_skipped_triples")
    return None


def sample_bpr_triples(dataset, batch_size, rng, owned_sets=None):
    """(user, owned item, unowned item) triples; (u, i) uniform over the
    training pairs, j uniform over the user's unowned items."""
    pairs = dataset.train_pairs
    if not pairs:
        raise ValueError("no training pairs to sample from")
    owned_sets = owned_sets or dataset.train_items_by_user()
    picks = rng.integers(len(pairs), size=batch_size)
    triples = []
    for p in picks:
        u, i = pairs[int(p)]
        j = sample_negative(u, dataset.n_items, owned_sets[u], rng)
        if j is not None:
            triples.append((u, i, j))
    return triples


def adam_step(params, grads, cfg):
    """Bias-corrected Adam update applied tensor by tensor."""
    params.step += 1
    t = params.step
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    for name, tensor in params.tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.value)
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        tensor.value = tensor.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


@dataclass
class TrainResult:
    params: ModelParams
    model: object
    best_epoch: int
    best_recall: float
    loss_reports: list
    metrics_reports: list
    epoch_log: list = field(default_factory=list)


def train(dataset, cfg, ssl_cfg=None, log_path=None, progress=None):
    """Run the full optimization and return the best-recall snapshot."""
    ssl_cfg = ssl_cfg or SslConfig()
    streams = rng_streams(cfg.seed)
    params = ModelParams.init(dataset.n_users, cfg, streams["init"])
    model = CmhcModel(dataset, cfg, ssl_cfg, params)
    owned = model.train_item_sets
    pairs = list(dataset.train_pairs)
    if not pairs:
        raise ValueError("dataset has no training pairs")

    sampling = streams["sampling"]
    shuffling = streams["shuffling"]
    best = {"recall": -1.0, "epoch": 0, "values": params.values()}
    loss_reports, metrics_reports, epoch_log = [], [], []

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = sampling.permutation(len(pairs))
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            triples = []
            for p in chunk:
                u, i = pairs[int(p)]
                j = sample_negative(u, dataset.n_items, owned[u], sampling)
                if j is not None:
                    triples.append((u, i, j))
            if not triples:
                continue
            scope_idx = np.unique([t[0] for t in triples])
            out = model.forward(scope_indices=scope_idx)
            total, _, report = model.batch_losses(out, triples, shuffling)
            if not np.isfinite(total.value):
                raise NonFiniteError(f"non-finite joint loss at epoch {epoch}")
            backward(total)
            grads = {name: grad_of(t) for name, t in params.tensors.items()}
            adam_step(params, grads, cfg)
            sums += np.array([report.l_r, report.l_s11, report.l_s12, report.l_2])
            n_batches += 1
        params.assert_finite(f"after epoch {epoch}")

        mean = sums / max(1, n_batches)
        loss_report = LossReport(mean[0], mean[1], mean[2], mean[3],
                                 ssl_cfg.beta1, ssl_cfg.beta2)
        loss_reports.append(loss_report)

        out = model.forward()  # full scope for evaluation
        metrics = evaluate(out.h.value, out.Q.value, dataset,
                           scenario=cfg.eval_scenario, k=cfg.eval_k)
        metrics_reports.append(metrics)
        if metrics.recall > best["recall"]:
            best = {"recall": metrics.recall, "epoch": epoch,
                    "values": params.values()}

        entry = {"epoch": epoch, **loss_report.as_dict(), **metrics.as_dict(),
                 "seconds": time.perf_counter() - t0,
                 "counters": snapshot_counters()}
        epoch_log.append(entry)
        if log_path:
            mio.append_jsonl(log_path, entry)
        if progress:
            progress(entry)

    params.load_values(best["values"])
    return TrainResult(params=params, model=model, best_epoch=best["epoch"],
                       best_recall=best["recall"], loss_reports=loss_reports,
                       metrics_reports=metrics_reports, epoch_log=epoch_log)


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(dirpath, params, cfg, ssl_cfg, dataset):
    os.makedirs(dirpath, exist_ok=True)
    tensor_files = {}
    for name, t in params.tensors.items():
        fname = name.replace(">", "_to_").replace(":", "__") + ".bin"
        val = t.value if t.value.ndim == 2 else t.value.reshape(1, -1)
        mio.save_matrix(os.path.join(dirpath, fname), val)
        tensor_files[name] = {"file": fname, "shape": list(t.value.shape)}
    manifest = {
        "tensors": tensor_files,
        "n_users": dataset.n_users,
        "n_items": dataset.n_items,
        "train_config": _cfg_dict(cfg),
        "ssl_config": vars(ssl_cfg).copy(),
    }
    with open(os.path.join(dirpath, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return dirpath


def load_checkpoint(dirpath):
    with open(os.path.join(dirpath, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = TrainConfig(**{k: (tuple(v) if k == "ablations" else v)
                         for k, v in manifest["train_config"].items()})
    ssl_cfg = SslConfig(**manifest["ssl_config"])
    tensors = {}
    for name, info in manifest["tensors"].items():
        val = mio.load_matrix(os.path.join(dirpath, info["file"]))
        tensors[name] = parameter(val.reshape(info["shape"]), name)
    params = ModelParams(tensors)
    return params, cfg, ssl_cfg, manifest


def _cfg_dict(cfg):
    d = vars(cfg).copy()
    d["ablations"] = list(d["ablations"])
    return d
