"""Loading of rating/trust files and dataset assembly.

Rating files carry ``user item [rating]`` per line, trust files
``source target [weight]``; '#'-prefixed lines are comments. The separator
(space, tab or comma) is auto-detected from the first data line of each
file. Ratings are binarized for the ranking pipeline; the raw values are
kept alongside for inspection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionRecord:
    user: str
    item: str
    rating: float


@dataclass(frozen=True)
class SocialEdge:
    source: str
    target: str
    weight: float


@dataclass
class Dataset:
    """ID-mapped interaction and social matrices plus train/test pairs.

    ``R`` is binary over the *training* pairs only (a row is nonzero iff the
    user has at least one training interaction); ``R_raw`` keeps the raw
    rating values over the same pattern. Instances are treated as immutable
    after construction.
    """

    n_users: int
    n_items: int
    user_ids: list  # dense -> external
    item_ids: list
    user_index: dict  # external -> dense
    item_index: dict
    R: sp.csr_matrix
    R_raw: sp.csr_matrix
    S: sp.csr_matrix
    train_pairs: list  # (user, item) dense pairs
    test_pairs: list
    report: dict = field(default_factory=dict)

    def train_items_by_user(self):
        out = [set() for _ in range(self.n_users)]
        for u, i in self.train_pairs:
            out[u].add(i)
        return out

    def test_items_by_user(self):
        out = [set() for _ in range(self.n_users)]
        for u, i in self.test_pairs:
            out[u].add(i)
        return out


def _detect_separator(line):
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # any whitespace


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_ratings(path, separator="auto", stats=None):
    """Parse a rating file into records, in file order.

    Missing ratings default to 1.0. Lines with fewer than two fields raise
    :class:`ParseError` naming the line number.
    """
    records = []
    sep = None if separator == "auto" else separator
    detected = separator != "auto"
    for lineno, line in _data_lines(path):
        if not detected:
            sep = _detect_separator(line)
            detected = True
        fields = line.split(sep)
        fields = [f for f in fields if f != ""]
        if len(fields) < 2:
            raise ParseError(f"{path}:{lineno}: expected 'user item [rating]', got {line!r}")
        rating = 1.0
        if len(fields) >= 3:
            try:
                rating = float(fields[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad rating {fields[2]!r}") from exc
        if not np.isfinite(rating):
            raise ParseError(f"{path}:{lineno}: non-finite rating")
        records.append(InteractionRecord(fields[0], fields[1], rating))
    if stats is not None:
        stats["rating_lines"] = len(records)
    return records


def load_trust(path, separator="auto", stats=None):
    """Parse a trust file into directed edges.

    Self-loops are dropped (and counted into ``stats``); a repeated
    (source, target) pair keeps the last weight seen.
    """
    edges = {}
    self_loops = 0
    sep = None if separator == "auto" else separator
    detected = separator != "auto"
    for lineno, line in _data_lines(path):
        if not detected:
            sep = _detect_separator(line)
            detected = True
        fields = [f for f in line.split(sep) if f != ""]
        if len(fields) < 2:
            raise ParseError(f"{path}:{lineno}: expected 'src dst [weight]', got {line!r}")
        weight = 1.0
        if len(fields) >= 3:
            try:
                weight = float(fields[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad weight {fields[2]!r}") from exc
        if fields[0] == fields[1]:
            self_loops += 1
            continue
        if weight <= 0:
            raise ParseError(f"{path}:{lineno}: non-positive trust weight")
        edges[(fields[0], fields[1])] = weight
    if stats is not None:
        stats["self_loops_dropped"] = self_loops
        stats["trust_edges"] = len(edges)
    return [SocialEdge(s, t, w) for (s, t), w in edges.items()]


def build_dataset(records, edges):
    """Assemble dense-indexed matrices from records and social edges.

    Dense ids are assigned in first-seen order over the rating records.
    Social edges with an endpoint that never rated anything are dropped
    (motif matrices must stay square over rated users). All interactions
    land in ``train_pairs``; use :func:`split_kfold` to carve out tests.
    """
    user_index, item_index = {}, {}
    user_ids, item_ids = [], []
    for rec in records:
        if rec.user not in user_index:
            user_index[rec.user] = len(user_ids)
            user_ids.append(rec.user)
        if rec.item not in item_index:
            item_index[rec.item] = len(item_ids)
            item_ids.append(rec.item)
    n_users, n_items = len(user_ids), len(item_ids)
    if n_users == 0 or n_items == 0:
        raise EmptyDatasetError("no users or no items after loading")

    seen = {}
    duplicates = 0
    for rec in records:
        key = (user_index[rec.user], item_index[rec.item])
        if key in seen:
            duplicates += 1
        seen[key] = rec.rating  # last rating wins, presence is what matters

    pairs = sorted(seen)
    rows = np.array([p[0] for p in pairs], dtype=np.int64)
    cols = np.array([p[1] for p in pairs], dtype=np.int64)
    raw = np.array([seen[p] for p in pairs], dtype=np.float64)
    R = sp.csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n_users, n_items))
    R_raw = sp.csr_matrix((raw, (rows, cols)), shape=(n_users, n_items))

    s_rows, s_cols, s_vals = [], [], []
    dropped_edges = 0
    for edge in edges:
        su = user_index.get(edge.source)
        tu = user_index.get(edge.target)
        if su is None or tu is None:
            dropped_edges += 1
            continue
        s_rows.append(su)
        s_cols.append(tu)
        s_vals.append(edge.weight)
    S = sp.csr_matrix((s_vals, (s_rows, s_cols)), shape=(n_users, n_users))
    S.sum_duplicates()

    report = {
        "n_users": n_users,
        "n_items": n_items,
        "n_interactions": len(pairs),
        "n_social_edges": int(S.nnz),
        "duplicate_interactions": duplicates,
        "social_edges_dropped_unknown_user": dropped_edges,
        "density": len(pairs) / (n_users * n_items),
    }
    return Dataset(
        n_users=n_users,
        n_items=n_items,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index=user_index,
        item_index=item_index,
        R=R,
        R_raw=R_raw,
        S=S,
        train_pairs=pairs,
        test_pairs=[],
        report=report,
    )


def load_dataset(ratings_path, trust_path=None, separator="auto"):
    """Convenience: load both files and assemble the dataset."""
    stats = {}
    records = load_ratings(ratings_path, separator, stats)
    edges = load_trust(trust_path, separator, stats) if trust_path else []
    ds = build_dataset(records, edges)
    ds.report.update(stats)
    return ds


def _rebuild_matrices(dataset, train_pairs):
    if train_pairs:
        rows = np.array([p[0] for p in train_pairs], dtype=np.int64)
        cols = np.array([p[1] for p in train_pairs], dtype=np.int64)
        data = np.ones(len(train_pairs))
    else:
        rows = cols = np.array([], dtype=np.int64)
        data = np.array([])
    R = sp.csr_matrix((data, (rows, cols)), shape=(dataset.n_users, dataset.n_items))
    raw_vals = np.asarray(dataset.R_raw[rows, cols]).ravel() if len(train_pairs) else data
    R_raw = sp.csr_matrix((raw_vals, (rows, cols)), shape=R.shape)
    return R, R_raw


def split_kfold(dataset, k, seed):
    """Partition interactions into k folds; fold i is test, the rest train.

    Splits are stratified per user when the user has at least k
    interactions; smaller profiles are dealt round-robin from a random
    offset, so no fold systematically empties a user's training half.
    Users whose training part still ends up empty have their test pairs
    flagged for exclusion in the fold report.
    """
    pairs = list(dataset.train_pairs) + list(dataset.test_pairs)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(pairs):
        raise ValueError(f"k={k} exceeds {len(pairs)} interactions")

    rng = np.random.default_rng(seed)
    by_user = {}
    for u, i in pairs:
        by_user.setdefault(u, []).append((u, i))

    # Deal each user's shuffled items to folds from one rotating counter:
    # every user's profile spreads maximally across folds and the global
    # fold sizes stay within one of each other (exact when k divides N).
    fold_assign = {}
    cursor = int(rng.integers(k))
    user_order = rng.permutation(sorted(by_user))
    for u in user_order:
        items = by_user[u]
        order = rng.permutation(len(items))
        for j in order:
            fold_assign[items[j]] = cursor % k
            cursor += 1

    folds = []
    for fold in range(k):
        train = sorted(p for p in pairs if fold_assign[p] != fold)
        test = sorted(p for p in pairs if fold_assign[p] == fold)
        R, R_raw = _rebuild_matrices(dataset, train)
        train_users = {u for u, _ in train}
        orphaned = sorted({u for u, _ in test if u not in train_users})
        report = dict(dataset.report)
        report.update({
            "fold": fold,
            "k": k,
            "users_without_train": len(orphaned),
        })
        folds.append(replace(dataset, R=R, R_raw=R_raw, train_pairs=train,
                             test_pairs=test, report=report))
    return folds


def filter_cold_start(dataset, threshold=20):
    """Restrict evaluation to users with fewer than ``threshold`` interactions.

    Training data is untouched; only test pairs of heavy users are removed.
    Idempotent: the interaction count is the user's full profile size, which
    filtering does not change below a previously applied threshold.
    """
    totals = np.zeros(dataset.n_users, dtype=np.int64)
    for u, _ in dataset.train_pairs:
        totals[u] += 1
    for u, _ in dataset.test_pairs:
        totals[u] += 1
    keep = [p for p in dataset.test_pairs if totals[p[0]] < threshold]
    excluded = len(dataset.test_pairs) - len(keep)
    report = dict(dataset.report)
    report.update({
        "cold_start_threshold": threshold,
        "cold_start_excluded_pairs": excluded,
    })
    return replace(dataset, test_pairs=keep, report=report)


def summarize(dataset):
    """Dataset summary as a JSON-ready dict (counts, density, drop report)."""
    return {
        "n_users": dataset.n_users,
        "n_items": dataset.n_items,
        "n_train_pairs": len(dataset.train_pairs),
        "n_test_pairs": len(dataset.test_pairs),
        "n_social_edges": int(dataset.S.nnz),
        "density": dataset.report.get(
            "density",
            (len(dataset.train_pairs) + len(dataset.test_pairs))
            / max(1, dataset.n_users * dataset.n_items),
        ),
        "report": dict(dataset.report),
    }


def summary_json(dataset):
    return json.dumps(summarize(dataset), indent=2, sort_keys=True)
