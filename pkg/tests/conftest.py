"""Shared fixtures and independent oracles for the test suite.

The oracles here recompute expected values from first principles (plain
Python loops, tuple sorts, extended precision) so the vectorized library
code is checked against genuinely separate arithmetic.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from driftrec.data import InteractionLog, RawEvent, build_log, timestamp_split
from driftrec.decay import DecaySpec, WeightedBipartiteGraph
from driftrec.synthetic import SyntheticSpec, generate


# --------------------------------------------------------------------------
# fixture data


def make_log(rows):
    """InteractionLog from (user_key, item_key, timestamp) tuples."""
    return build_log([RawEvent(str(u), str(i), int(t)) for u, i, t in rows])


@pytest.fixture
def line_log():
    """10 interactions at timestamps 1..10, one user-item pair each."""
    rows = [(f"u{j % 3}", f"i{j}", j + 1) for j in range(10)]
    return make_log(rows)


@pytest.fixture(scope="session")
def drift_split():
    """Moderate synthetic drift dataset split, shared across tests."""
    log = generate(SyntheticSpec(num_users=60, num_items=90, num_events=3000, seed=11))
    return timestamp_split(log)


def random_graph(rng, max_users=20, max_items=30, max_edges=200):
    """Random weighted bipartite graph with weights in (0, 1]."""
    num_users = int(rng.integers(1, max_users + 1))
    num_items = int(rng.integers(1, max_items + 1))
    max_possible = num_users * num_items
    num_edges = int(rng.integers(1, min(max_edges, max_possible) + 1))
    keys = rng.choice(max_possible, size=num_edges, replace=False)
    users = (keys // num_items).astype(np.int64)
    items = (keys % num_items).astype(np.int64)
    weights = rng.uniform(0.0, 1.0, size=num_edges)
    weights[weights == 0.0] = 1.0  # weights live in (0, 1]
    if rng.random() < 0.2:
        weights[rng.integers(0, num_edges)] = 1.0  # exercise the closed top bin
    last = np.full(num_users, -1, dtype=np.int64)
    return WeightedBipartiteGraph(
        users=users,
        items=items,
        weights=weights,
        user_last_time=last,
        num_users=num_users,
        num_items=num_items,
        spec=DecaySpec(),
    )


def log_with_exact_edges(num_edges, num_users, num_items, seed, t_lo=0, t_hi=10_000_000):
    """InteractionLog holding exactly ``num_edges`` distinct pairs."""
    rng = np.random.default_rng(seed)
    keys = rng.choice(num_users * num_items, size=num_edges, replace=False)
    users = (keys // num_items).astype(np.int64)
    items = (keys % num_items).astype(np.int64)
    times = rng.integers(t_lo, t_hi, size=num_edges).astype(np.int64)
    order = np.lexsort((items, users, times))
    return InteractionLog(
        users=users[order],
        items=items[order],
        times=times[order],
        user_vocab={f"u{k}": k for k in range(num_users)},
        item_vocab={f"i{k}": k for k in range(num_items)},
    )


# --------------------------------------------------------------------------
# independent metric oracle (plain Python, tuple sorts, sequential sums)


def oracle_rank(scores, exclude):
    """Full ranking: score descending, index ascending, exclusions dropped."""
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    banned = set(int(e) for e in exclude)
    return [j for j in order if j not in banned]


def oracle_recall(ranked, positives, k):
    pos = set(int(p) for p in positives)
    hits = sum(1 for j in ranked[:k] if j in pos)
    return hits / len(pos)


def oracle_ndcg(ranked, positives, k):
    pos = set(int(p) for p in positives)
    dcg = 0.0
    for rank0, j in enumerate(ranked[:k]):
        if j in pos:
            dcg += 1.0 / math.log2(rank0 + 2)
    idcg = 0.0
    for i in range(1, min(k, len(pos)) + 1):
        idcg += 1.0 / math.log2(i + 1)
    return dcg / idcg


def oracle_evaluate(model, split, ks, part="test"):
    """Per-user metric dict computed from first principles."""
    log = {"validation": split.validation, "test": split.test}[part]
    pos_by_user: dict[int, set] = {}
    for u, i in zip(log.users.tolist(), log.items.tolist()):
        pos_by_user.setdefault(u, set()).add(i)
    train_by_user: dict[int, set] = {}
    for u, i in zip(split.train.users.tolist(), split.train.items.tolist()):
        train_by_user.setdefault(u, set()).add(i)

    per_user = {}
    for u in sorted(pos_by_user):
        scores = [model.score(u, p) for p in range(split.num_items)]
        ranked = oracle_rank(scores, train_by_user.get(u, set()))
        positives = sorted(pos_by_user[u])
        per_user[u] = {
            k: (oracle_recall(ranked, positives, k), oracle_ndcg(ranked, positives, k))
            for k in ks
        }
    return per_user
