"""Loader, assembly, k-fold and cold-start contracts."""

import numpy as np
import pytest

from motifrec.data import (EmptyDatasetError, InteractionRecord, ParseError,
                           SocialEdge, build_dataset, filter_cold_start,
                           load_dataset, load_ratings, load_trust, split_kfold,
                           summarize)


class TestLoadRatings:
    def test_space_separated_with_rating(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("1 42 5\n")
        recs = load_ratings(p)
        assert recs == [InteractionRecord("1", "42", 5.0)]

    def test_comma_separated_default_rating(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("u7,i3\n")
        assert load_ratings(p) == [InteractionRecord("u7", "i3", 1.0)]

    def test_tab_separated_and_comments(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("# header\nu1\ti1\t2.5\n\nu2\ti2\n")
        recs = load_ratings(p)
        assert recs[0].rating == 2.5
        assert recs[1] == InteractionRecord("u2", "i2", 1.0)

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("u1 i1\nonlyonefield\n")
        with pytest.raises(ParseError, match=":2"):
            load_ratings(p)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            load_ratings(tmp_path / "nope.txt")

    def test_order_stable(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("b i2\na i1\nb i1\n")
        assert load_ratings(p) == load_ratings(p)


class TestLoadTrust:
    def test_default_weight(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("1 2\n")
        assert load_trust(p) == [SocialEdge("1", "2", 1.0)]

    def test_self_loop_dropped_and_counted(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("3 3 1\n1 2\n")
        stats = {}
        edges = load_trust(p, stats=stats)
        assert stats["self_loops_dropped"] == 1
        assert edges == [SocialEdge("1", "2", 1.0)]

    def test_duplicate_keeps_last_weight(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("1 2 0.5\n1 2 0.9\n")
        assert load_trust(p) == [SocialEdge("1", "2", 0.9)]


class TestBuildDataset:
    def test_two_users_one_item(self):
        ds = build_dataset([InteractionRecord("a", "x", 1.0),
                            InteractionRecord("b", "x", 2.0)], [])
        assert (ds.n_users, ds.n_items) == (2, 1)
        assert np.array_equal(ds.R.toarray(), np.array([[1.0], [1.0]]))
        assert ds.S.nnz == 0

    def test_duplicate_interaction_binarized(self):
        ds = build_dataset([InteractionRecord("a", "x", 1.0),
                            InteractionRecord("a", "x", 4.0)], [])
        assert ds.R.nnz == 1
        assert ds.R.toarray()[0, 0] == 1.0

    def test_unknown_social_endpoints_dropped(self):
        ds = build_dataset(
            [InteractionRecord("a", "x", 1.0), InteractionRecord("b", "x", 1.0)],
            [SocialEdge("a", "b", 1.0), SocialEdge("a", "ghost", 1.0),
             SocialEdge("ghost", "b", 1.0)])
        assert ds.S.nnz == 1
        assert ds.report["social_edges_dropped_unknown_user"] == 2

    def test_empty_dataset_error(self):
        with pytest.raises(EmptyDatasetError):
            build_dataset([], [])

    def test_first_seen_order_and_roundtrip(self):
        ds = build_dataset([InteractionRecord("b", "y", 1.0),
                            InteractionRecord("a", "x", 1.0)], [])
        assert ds.user_ids == ["b", "a"]
        for ext, dense in ds.user_index.items():
            assert ds.user_ids[dense] == ext
        for ext, dense in ds.item_index.items():
            assert ds.item_ids[dense] == ext

    def test_density_formula(self):
        ds = build_dataset([InteractionRecord("a", "x", 1.0),
                            InteractionRecord("a", "y", 1.0),
                            InteractionRecord("b", "x", 1.0)], [])
        assert ds.report["density"] == pytest.approx(3 / 4)

    def test_same_bytes_same_dataset(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("u1 i1\nu2 i1\nu1 i2\n")
        t = tmp_path / "t.txt"
        t.write_text("u1 u2\n")
        d1 = load_dataset(p, t)
        d2 = load_dataset(p, t)
        assert d1.train_pairs == d2.train_pairs
        assert (d1.R != d2.R).nnz == 0
        assert (d1.S != d2.S).nnz == 0
        assert d1.user_ids == d2.user_ids


class TestSplitKfold:
    def _ds(self, n_users=5, per_user=2):
        recs = [InteractionRecord(f"u{u}", f"i{u}_{j}", 1.0)
                for u in range(n_users) for j in range(per_user)]
        return build_dataset(recs, [])

    def test_even_fold_sizes(self):
        ds = self._ds(5, 2)  # 10 interactions
        folds = split_kfold(ds, 5, seed=0)
        assert all(len(f.test_pairs) == 2 for f in folds)

    def test_determinism(self):
        ds = self._ds()
        a = split_kfold(ds, 5, seed=7)
        b = split_kfold(ds, 5, seed=7)
        for fa, fb in zip(a, b):
            assert fa.test_pairs == fb.test_pairs

    def test_remainder_rule(self):
        ds = build_dataset([InteractionRecord("a", "x", 1.0),
                            InteractionRecord("a", "y", 1.0),
                            InteractionRecord("a", "z", 1.0)], [])
        folds = split_kfold(ds, 2, seed=0)
        sizes = sorted(len(f.test_pairs) for f in folds)
        assert sizes == [1, 2]

    def test_union_and_disjoint(self):
        ds = self._ds(6, 3)
        folds = split_kfold(ds, 3, seed=1)
        all_pairs = set(ds.train_pairs)
        seen = []
        for f in folds:
            assert set(f.train_pairs) | set(f.test_pairs) == all_pairs
            assert not set(f.train_pairs) & set(f.test_pairs)
            seen.extend(f.test_pairs)
        assert sorted(seen) == sorted(all_pairs)

    def test_fold_R_matches_train_pairs(self):
        ds = self._ds(4, 3)
        for f in split_kfold(ds, 3, seed=2):
            pairs = {(r, c) for r, c in zip(*f.R.nonzero())}
            assert pairs == set(f.train_pairs)

    def test_k_too_large(self):
        ds = self._ds(2, 1)
        with pytest.raises(ValueError):
            split_kfold(ds, 3, seed=0)

    def test_stratified_users_keep_train(self):
        ds = self._ds(8, 5)
        for f in split_kfold(ds, 5, seed=3):
            assert f.report["users_without_train"] == 0


class TestColdStart:
    def _ds_with_counts(self, heavy=25, light=19):
        recs = [InteractionRecord("heavy", f"i{j}", 1.0) for j in range(heavy)]
        recs += [InteractionRecord("light", f"i{j}", 1.0) for j in range(light)]
        ds = build_dataset(recs, [])
        folds = split_kfold(ds, 5, seed=0)
        return folds[0]

    def test_threshold_boundary(self):
        fold = self._ds_with_counts()
        filtered = filter_cold_start(fold, threshold=20)
        users = {fold.user_ids[u] for u, _ in filtered.test_pairs}
        assert users == {"light"}  # 19 < 20 stays, 25 goes

    def test_idempotent(self):
        fold = self._ds_with_counts()
        once = filter_cold_start(fold, threshold=20)
        twice = filter_cold_start(once, threshold=20)
        assert once.test_pairs == twice.test_pairs

    def test_training_unchanged(self):
        fold = self._ds_with_counts()
        filtered = filter_cold_start(fold, threshold=20)
        assert filtered.train_pairs == fold.train_pairs

    def test_degenerate_threshold(self):
        fold = self._ds_with_counts()
        filtered = filter_cold_start(fold, threshold=1)
        assert filtered.test_pairs == []
        assert filtered.report["cold_start_excluded_pairs"] == len(fold.test_pairs)


def test_summarize_shape():
    ds = build_dataset([InteractionRecord("a", "x", 1.0)], [])
    s = summarize(ds)
    assert s["n_users"] == 1 and s["n_items"] == 1
    assert "density" in s and "report" in s
