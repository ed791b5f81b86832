"""Shared plumbing: operation counters and seeded random streams."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

# Mutable global counters; cheap enough to leave always-on. Trainers snapshot
# them into the per-epoch log so tests can assert how much work ran.
counters = defaultdict(int)


def count(name, n=1):
    counters[name] += n


def reset_counters():
    counters.clear()


def snapshot_counters():
    return dict(counters)


# Named random streams, all derived from one root seed so that components
# (initialization, triple sampling, negative shuffling) stay independently
# reproducible.
STREAMS = ("init", "sampling", "shuffling")


def rng_streams(seed):
    """Map stream name -> independent numpy Generator derived from ``seed``."""
    root = np.random.SeedSequence(int(seed))
    children = root.spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def spawn_seed(seed, index):
    """Derived integer seed for an experiment point (sweeps, repeats, folds).

    Uses a spawn key disjoint from the ``rng_streams`` children so derived
    runs never share a stream with the parent run.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(1000 + int(index),))
    return int(ss.generate_state(1)[0])
