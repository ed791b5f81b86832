import numpy as np
import pytest
import scipy.sparse as sp

from motifrec.data import InteractionRecord, SocialEdge, build_dataset


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f()`` wrt array ``x`` (in place)."""
    g = np.zeros_like(x)
    flat, gf = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, n, floor=1e-3):
    """Guarded relative error; the floor only excuses sub-1e-7 noise."""
    a, n = np.asarray(a), np.asarray(n)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def random_social(n, p, rng):
    """Directed random social csr with zero diagonal."""
    dense = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(dense, 0.0)
    return sp.csr_matrix(dense)


def random_interactions(n_users, n_items, p, rng):
    dense = (rng.random((n_users, n_items)) < p).astype(float)
    return sp.csr_matrix(dense)


def edges_of(S):
    coo = sp.coo_matrix(S)
    return list(zip(coo.row.tolist(), coo.col.tolist()))


def toy_dataset(n_users=12, n_items=8, per_user=4, social=30, seed=0):
    rng = np.random.default_rng(seed)
    records = []
    for u in range(n_users):
        for i in rng.choice(n_items, size=min(per_user, n_items), replace=False):
            records.append(InteractionRecord(f"u{u}", f"i{i}", 1.0))
    edges = []
    seen = set()
    for _ in range(social):
        a, b = rng.integers(n_users, size=2)
        if a != b and (a, b) not in seen:
            seen.add((a, b))
            edges.append(SocialEdge(f"u{a}", f"u{b}", 1.0))
    return build_dataset(records, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
