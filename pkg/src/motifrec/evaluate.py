"""Top-K scoring and ranking metrics.

Candidate items are the full catalog minus the user's training items
(masked to -inf before ranking); score ties break by ascending item index
for reproducibility. NDCG uses binary gains with a 1/log2(rank+1)
discount and the ideal DCG truncated at min(k, |relevant|).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import filter_cold_start


@dataclass
class MetricsReport:
    precision: float
    recall: float
    ndcg: float
    k: int
    scenario: str
    n_users: int
    excluded_users: int = 0
    per_user: dict = field(default_factory=dict, repr=False)

    def as_dict(self):
        return {
            "scenario": self.scenario,
            "k": self.k,
            "precision_at_k": self.precision,
            "recall_at_k": self.recall,
            "ndcg_at_k": self.ndcg,
            "n_users": self.n_users,
            "excluded_users": self.excluded_users,
        }


def predict_scores(h_u, Q, exclude=None):
    """Dense item scores h_u . q_i; ``exclude`` items are masked to -inf."""
    scores = np.asarray(Q) @ np.asarray(h_u)
    if exclude is not None and len(exclude):
        scores = scores.copy()
        scores[np.fromiter(exclude, dtype=np.int64)] = -np.inf
    return scores


def rank_items(scores, k):
    """Indices of the k best scores, ties broken by ascending item index."""
    k = min(k, len(scores))
    # stable sort on negated scores keeps the lower index first among ties
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def topk_metrics(ranked, relevant, k=10):
    """(precision@k, recall@k, ndcg@k) for one user.

    ``ranked`` is the recommended item list (best first), ``relevant`` the
    user's held-out items; hits are counted once and both precision and
    recall derive from that count.
    """
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set must be non-empty; exclude such users upstream")
    top = list(ranked)[:k]
    hit_ranks = [pos for pos, item in enumerate(top, start=1) if item in relevant]
    hits = len(hit_ranks)
    precision = hits / k
    recall = hits / len(relevant)
    dcg = sum(1.0 / np.log2(p + 1) for p in hit_ranks)
    ideal = sum(1.0 / np.log2(p + 1) for p in range(1, min(k, len(relevant)) + 1))
    return precision, recall, dcg / ideal


def evaluate(h_all, Q, dataset, scenario="general", k=10):
    """Rank the full catalog for every eligible test user and average.

    Eligible users have at least one test item and at least one training
    interaction; the cold-start scenario first restricts test pairs to
    light users. Per-user metric vectors ride along in the report.
    """
    ds = filter_cold_start(dataset) if scenario == "cold_start" else dataset
    train_sets = ds.train_items_by_user()
    test_sets = ds.test_items_by_user()
    h_all = np.asarray(h_all)
    Q = np.asarray(Q)

    users, precisions, recalls, ndcgs = [], [], [], []
    excluded = 0
    for u in range(ds.n_users):
        if not test_sets[u]:
            continue
        if not train_sets[u]:
            excluded += 1
            continue
        scores = predict_scores(h_all[u], Q, exclude=train_sets[u])
        ranked = rank_items(scores, k)
        p, r, n = topk_metrics(ranked, test_sets[u], k)
        users.append(u)
        precisions.append(p)
        recalls.append(r)
        ndcgs.append(n)

    if not users:
        return MetricsReport(0.0, 0.0, 0.0, k, scenario, 0, excluded)
    return MetricsReport(
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        ndcg=float(np.mean(ndcgs)),
        k=k,
        scenario=scenario,
        n_users=len(users),
        excluded_users=excluded,
        per_user={
            "users": np.array(users),
            "precision": np.array(precisions),
            "recall": np.array(recalls),
            "ndcg": np.array(ndcgs),
        },
    )
