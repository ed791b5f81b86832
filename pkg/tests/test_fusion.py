"""Hierarchical attention fusion and the attention export."""

import csv

import numpy as np
import pytest

from motifrec.data import build_dataset, InteractionRecord
from motifrec.fusion import (AttentionWeights, cross_channel_fuse,
                             export_attention, within_channel_fuse)


def oracle_softmax(scores):
    e = np.exp(scores - scores.max())
    return e / e.sum()


def oracle_scores(H, a, W):
    return np.array([a @ (W @ h) for h in H])


class TestWithinChannel:
    def test_identical_inputs_split_evenly(self, rng):
        h = rng.standard_normal(4)
        a = rng.standard_normal(4)
        W = rng.standard_normal((4, 4))
        fused, alpha = within_channel_fuse(h, h, a, W)
        assert np.allclose(alpha, [0.5, 0.5])
        assert np.allclose(fused, h)

    def test_saturation(self, rng):
        a = np.array([1.0, 0.0])
        W = np.eye(2)
        h_m = np.array([50.0, 0.0])   # score 50
        h_n = np.array([-50.0, 0.0])  # score -50
        fused, alpha = within_channel_fuse(h_m, h_n, a, W)
        assert alpha[0] > 1.0 - 1e-12
        assert np.allclose(fused, h_m, atol=1e-10)

    def test_matches_scalar_oracle(self, rng):
        for _ in range(10):
            Hm = rng.standard_normal((5, 3))
            Hn = rng.standard_normal((5, 3))
            a = rng.standard_normal(3)
            W = rng.standard_normal((3, 3))
            fused, alpha = within_channel_fuse(Hm, Hn, a, W)
            for u in range(5):
                sm = oracle_scores(Hm[u:u + 1], a, W)[0]
                sn = oracle_scores(Hn[u:u + 1], a, W)[0]
                al = oracle_softmax(np.array([sm, sn]))
                assert np.max(np.abs(alpha[u] - al)) < 1e-12
                assert np.max(np.abs(fused[u] - (al[0] * Hm[u] + al[1] * Hn[u]))) < 1e-12


class TestCrossChannel:
    def test_identical_channels_one_third(self, rng):
        h = rng.standard_normal((6, 3))
        a = rng.standard_normal(3)
        W = rng.standard_normal((3, 3))
        fused, alphas = cross_channel_fuse({"s": h, "j": h, "p": h}, a, W)
        for c in "sjp":
            assert np.allclose(alphas[c], 1 / 3)
        assert np.allclose(fused, h)

    def test_alphas_sum_to_one(self, rng):
        per = {c: rng.standard_normal((8, 4)) for c in "sjp"}
        a = rng.standard_normal(4)
        W = rng.standard_normal((4, 4))
        _, alphas = cross_channel_fuse(per, a, W)
        total = sum(alphas[c] for c in "sjp")
        assert np.max(np.abs(total - 1.0)) < 1e-9
        for c in "sjp":
            assert np.all(alphas[c] > 0.0) and np.all(alphas[c] < 1.0)

    def test_matches_scalar_oracle(self, rng):
        per = {c: rng.standard_normal((4, 3)) for c in "sjp"}
        a = rng.standard_normal(3)
        W = rng.standard_normal((3, 3))
        fused, alphas = cross_channel_fuse(per, a, W)
        for u in range(4):
            scores = np.array([oracle_scores(per[c][u:u + 1], a, W)[0] for c in "sjp"])
            al = oracle_softmax(scores)
            expected = sum(al[k] * per[c][u] for k, c in enumerate("sjp"))
            assert np.max(np.abs(fused[u] - expected)) < 1e-12
            for k, c in enumerate("sjp"):
                assert alphas[c][u] == pytest.approx(al[k], abs=1e-12)

    def test_shift_invariance(self, rng):
        # shifting every channel's logit equally leaves alphas unchanged;
        # adding a common vector v with a^T W v = const does exactly that
        per = {c: rng.standard_normal((5, 3)) for c in "sjp"}
        a = rng.standard_normal(3)
        W = rng.standard_normal((3, 3))
        shift = rng.standard_normal(3)
        _, base = cross_channel_fuse(per, a, W)
        shifted = {c: per[c] + shift for c in "sjp"}
        _, moved = cross_channel_fuse(shifted, a, W)
        for c in "sjp":
            assert np.max(np.abs(base[c] - moved[c])) < 1e-12

    def test_convex_hull_bound(self, rng):
        per = {c: rng.standard_normal((6, 4)) for c in "sjp"}
        weights = AttentionWeights.init(4, rng)
        fused, _ = cross_channel_fuse(per, weights.a2, weights.W2)
        cap = max(np.abs(per[c]).max() for c in "sjp")
        assert np.abs(fused).max() <= cap + 1e-12


class TestExport:
    def _dataset(self, n=5):
        recs = [InteractionRecord(f"u{k}", "i0", 1.0) for k in range(n)]
        return build_dataset(recs, [])

    def test_rows_sum_to_one_and_count(self, tmp_path, rng):
        ds = self._dataset(5)
        per = {c: rng.standard_normal((5, 3)) for c in "sjp"}
        a = rng.standard_normal(3)
        W = rng.standard_normal((3, 3))
        _, alphas = cross_channel_fuse(per, a, W)
        path = tmp_path / "att.csv"
        export_attention(ds, alphas, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5
        for row in rows:
            total = sum(float(row[f"alpha_{c}"]) for c in "sjp")
            assert abs(total - 1.0) < 1e-6

    def test_identical_channels_near_third(self, tmp_path, rng):
        ds = self._dataset(4)
        h = rng.standard_normal((4, 3))
        a = rng.standard_normal(3)
        W = rng.standard_normal((3, 3))
        _, alphas = cross_channel_fuse({"s": h, "j": h, "p": h}, a, W)
        path = tmp_path / "att.csv"
        export_attention(ds, alphas, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            for c in "sjp":
                assert abs(float(row[f"alpha_{c}"]) - 1 / 3) < 1e-9

    def test_missing_channel_written_as_zero(self, tmp_path, rng):
        ds = self._dataset(3)
        h = rng.standard_normal((3, 2))
        a = rng.standard_normal(2)
        W = rng.standard_normal((2, 2))
        _, alphas = cross_channel_fuse({"j": h, "p": h}, a, W)
        path = tmp_path / "att.csv"
        export_attention(ds, alphas, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            assert float(row["alpha_s"]) == 0.0
            total = sum(float(row[f"alpha_{c}"]) for c in "sjp")
            assert abs(total - 1.0) < 1e-6
