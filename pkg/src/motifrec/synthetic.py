"""Planted block-structure data for learning checks and demos.

Users and items split into aligned blocks; each user interacts mostly
within the own block and social edges concentrate inside blocks, so both
the interaction channels and the social channels carry the planted signal.
A uniform random ranker scores recall@k of k / n_items on this data, which
gives the analytic baseline that trained models are measured against.
"""

from __future__ import annotations

import numpy as np

from .data import InteractionRecord, SocialEdge, build_dataset


def planted_blocks(n_users=200, n_items=100, n_blocks=4, interactions_per_user=20,
                   within_block=0.9, social_per_user=6, social_within=0.9,
                   seed=0):
    """Generate a planted-block dataset.

    Each user draws ``interactions_per_user`` distinct items, picking from
    the own block with probability ``within_block``; social edges are drawn
    the same way. Returns the assembled dataset (all pairs in train; use
    ``split_kfold`` for held-out folds).
    """
    rng = np.random.default_rng(seed)
    users_per_block = n_users // n_blocks
    items_per_block = n_items // n_blocks

    def block_of_user(u):
        return min(u // users_per_block, n_blocks - 1)

    records = []
    for u in range(n_users):
        b = block_of_user(u)
        own = np.arange(b * items_per_block, (b + 1) * items_per_block)
        others = np.setdiff1d(np.arange(n_items), own)
        chosen = set()
        while len(chosen) < min(interactions_per_user, n_items - 1):
            pool = own if rng.random() < within_block else others
            chosen.add(int(pool[rng.integers(len(pool))]))
        for i in sorted(chosen):
            records.append(InteractionRecord(f"u{u}", f"i{i}", 1.0))

    edges = []
    seen = set()
    for u in range(n_users):
        b = block_of_user(u)
        own = [v for v in range(b * users_per_block, min((b + 1) * users_per_block, n_users))
               if v != u]
        others = [v for v in range(n_users) if block_of_user(v) != b]
        placed, tries = 0, 0
        while placed < social_per_user and tries < 50 * social_per_user:
            tries += 1
            pool = own if rng.random() < social_within else others
            v = int(pool[rng.integers(len(pool))])
            if (u, v) not in seen:
                seen.add((u, v))
                edges.append(SocialEdge(f"u{u}", f"u{v}", 1.0))
                placed += 1

    return build_dataset(records, edges)


def uniform_recall_baseline(k, n_items):
    """Expected recall@k of a uniform random ranking over the catalog."""
    return k / n_items
