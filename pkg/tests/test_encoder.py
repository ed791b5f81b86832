"""Channel propagation, layer averaging, item propagation, matrix dumps."""

import numpy as np
import scipy.sparse as sp

from motifrec import io as mio
from motifrec.encoder import (encode_channels, init_embeddings,
                              propagate_channel, propagate_items)
from motifrec.motifs import row_normalize
from motifrec.util import reset_counters, snapshot_counters


def random_row_stochastic(n, rng, density=0.5):
    A = sp.csr_matrix(rng.random((n, n)) * (rng.random((n, n)) < density))
    return row_normalize(A)


class TestPropagateChannel:
    def test_swap(self):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        out = propagate_channel(A, np.eye(2))
        assert np.array_equal(out, np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_zero_degree_row_copies_input(self, rng):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        H = rng.standard_normal((2, 3))
        out = propagate_channel(A, H)
        assert np.array_equal(out[1], H[1])
        assert np.allclose(out[0], H[1])

    def test_matches_dense_product(self, rng):
        for _ in range(10):
            A = random_row_stochastic(7, rng)
            H = rng.standard_normal((7, 4))
            dense = A.toarray() @ H
            zero = np.asarray(A.sum(axis=1)).ravel() == 0
            dense[zero] = H[zero]
            assert np.max(np.abs(propagate_channel(A, H) - dense)) < 1e-12

    def test_linearity(self, rng):
        A = random_row_stochastic(6, rng)
        H1 = rng.standard_normal((6, 3))
        H2 = rng.standard_normal((6, 3))
        lhs = propagate_channel(A, 2.0 * H1 + 3.0 * H2)
        rhs = 2.0 * propagate_channel(A, H1) + 3.0 * propagate_channel(A, H2)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_preserves_constant_column(self, rng):
        A = random_row_stochastic(8, rng)
        ones = np.ones((8, 1))
        out = propagate_channel(A, ones)
        assert np.max(np.abs(out - 1.0)) < 1e-12  # fallback rows also give 1

    def test_shape_mismatch(self):
        A = sp.csr_matrix((3, 3))
        try:
            propagate_channel(A, np.zeros((4, 2)))
            assert False, "expected shape error"
        except ValueError:
            pass


class TestEncodeChannels:
    def test_all_zero_degree_returns_p0(self, rng):
        P0 = rng.standard_normal((4, 3))
        out = encode_channels(P0, {"s": sp.csr_matrix((4, 4))}, 1)
        assert np.allclose(out["s"], P0)

    def test_two_cycle_hand_case(self):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        out = encode_channels(np.eye(2), {"s": A}, 2)["s"]
        expected = np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]])  # avg of I, swap, I
        assert np.allclose(out, expected, atol=1e-15)

    def test_output_bounded_by_max_layer_norm(self, rng):
        A = random_row_stochastic(10, rng)
        P0 = rng.standard_normal((10, 5))
        out = encode_channels(P0, {"s": A}, 3)["s"]
        assert np.all(np.isfinite(out))
        layers = [P0]
        dense = A.toarray()
        zero = np.asarray(A.sum(axis=1)).ravel() == 0
        for _ in range(3):
            nxt = dense @ layers[-1]
            nxt[zero] = layers[-1][zero]
            layers.append(nxt)
        cap = max(np.abs(l).max() for l in layers)
        assert np.abs(out).max() <= cap + 1e-12

    def test_sparse_product_count(self, rng):
        A = random_row_stochastic(5, rng)
        P0 = rng.standard_normal((5, 3))
        reset_counters()
        encode_channels(P0, {"s": A, "j": A, "p": A}, 2)
        assert snapshot_counters()["sparse_products"] == 3 * 2


class TestPropagateItems:
    def test_two_users_one_item(self):
        R = sp.csr_matrix(np.array([[1.0], [1.0]]))
        Q = propagate_items(R, np.eye(2))
        assert np.allclose(Q, np.array([[0.5, 0.5]]))

    def test_single_buyer_copies_row(self, rng):
        R = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        H = rng.standard_normal((2, 4))
        Q = propagate_items(R, H)
        assert np.allclose(Q[0], H[0])
        assert np.allclose(Q[1], H[1])

    def test_matches_dense_oracle(self, rng):
        for _ in range(10):
            R = sp.csr_matrix((rng.random((6, 5)) < 0.4).astype(float))
            H = rng.standard_normal((6, 3))
            counts = np.asarray(R.sum(axis=0)).ravel()
            dense = np.zeros((5, 3))
            nz = counts > 0
            dense[nz] = (R.toarray().T @ H)[nz] / counts[nz, None]
            assert np.max(np.abs(propagate_items(R, H) - dense)) < 1e-12

    def test_item_with_no_interactions_zero_row(self):
        R = sp.csr_matrix(np.array([[1.0, 0.0]]))
        Q = propagate_items(R, np.ones((1, 3)))
        assert np.all(Q[1] == 0.0)


class TestEmbeddingInit:
    def test_scale(self, rng):
        P = init_embeddings(100, 50, rng)
        a = np.sqrt(6.0 / 150)
        assert np.abs(P).max() <= a
        assert P.shape == (100, 50)

    def test_seeded(self):
        a = init_embeddings(10, 4, np.random.default_rng(3))
        b = init_embeddings(10, 4, np.random.default_rng(3))
        assert np.array_equal(a, b)


class TestMatrixDump:
    def test_round_trip(self, tmp_path, rng):
        M = rng.standard_normal((7, 3))
        path = tmp_path / "m.bin"
        mio.save_matrix(path, M)
        assert np.array_equal(mio.load_matrix(path), M)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOTAMAT!" + b"\0" * 32)
        try:
            mio.load_matrix(path)
            assert False
        except ValueError:
            pass

    def test_coo_text_round_trip(self, tmp_path, rng):
        A = sp.csr_matrix((rng.random((5, 4)) < 0.4) * rng.random((5, 4)))
        path = tmp_path / "a.txt"
        mio.save_coo_text(path, A)
        back = mio.load_coo_text(path)
        assert (A != back).nnz == 0
