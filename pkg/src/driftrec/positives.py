"""Graph filtration into weight layers and positive-sample-set construction.

The weighted graph is cut into n disjoint layers by equal-width weight
thresholds; an edge in layer i enters the training multiset with i copies,
so the optimizer visits recent interactions more often while old ones stay
in play. The resulting multiset is the training distribution: pair (u, p)
with multiplicity m is drawn with probability m / |set| under uniform
iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import InteractionLog, SplitDataset, holdout_pair_keys
from .decay import WeightedBipartiteGraph

__all__ = [
    "LayeredGraph",
    "PositiveSampleSet",
    "filtrate",
    "build_pss",
    "train_positives",
    "recent_k_positives",
    "leakage_filter",
]

RANGE_MODES = ("unit_interval", "data_range")


@dataclass(frozen=True)
class LayeredGraph:
    """Disjoint weight-layer decomposition of a weighted graph.

    ``thresholds`` holds the n+1 ascending bin edges; ``labels[e]`` is the
    1-based layer of edge e. Layer i covers [thresholds[i-1], thresholds[i])
    except the top layer, which is closed so maximal-weight edges (every
    user's most recent interaction) are not orphaned.
    """

    graph: WeightedBipartiteGraph
    n: int
    thresholds: np.ndarray
    labels: np.ndarray
    range_mode: str

    def layer_edge_indices(self, layer: int) -> np.ndarray:
        """Edge indices of one layer (1-based), in original edge order."""
        if not 1 <= layer <= self.n:
            raise IndexError(f"layer {layer} out of range 1..{self.n}")
        return np.nonzero(self.labels == layer)[0]

    @property
    def layers(self) -> list[np.ndarray]:
        """All layers as index arrays, layer 1 first."""
        return [self.layer_edge_indices(i) for i in range(1, self.n + 1)]


@dataclass(frozen=True)
class PositiveSampleSet:
    """Flat multiset of (user, item) training pairs.

    ``users``/``items`` carry duplicates; copies of one pair sit next to
    each other, layers in ascending order. ``layers``/``weights`` record
    per-entry provenance where known (0 / nan otherwise).
    """

    users: np.ndarray
    items: np.ndarray
    layers: np.ndarray
    weights: np.ndarray
    num_users: int
    num_items: int

    def __len__(self) -> int:
        return int(self.users.shape[0])

    def pair_keys(self) -> np.ndarray:
        return self.users * np.int64(self.num_items) + self.items

    def multiplicity(self) -> dict[tuple[int, int], int]:
        """Occurrence count per distinct pair."""
        keys, counts = np.unique(self.pair_keys(), return_counts=True)
        n_items = self.num_items
        return {
            (int(k // n_items), int(k % n_items)): int(c)
            for k, c in zip(keys, counts)
        }

    def pi(self) -> dict[tuple[int, int], float]:
        """Training distribution: multiplicity normalized by the multiset size."""
        total = len(self)
        return {pair: m / total for pair, m in self.multiplicity().items()}

    def audit_records(self) -> list[dict]:
        """One record per distinct pair, (user, item) ascending, for dumps."""
        order = np.lexsort((self.items, self.users))
        records: list[dict] = []
        prev_key = None
        n_items = self.num_items
        for idx in order:
            key = int(self.users[idx]) * n_items + int(self.items[idx])
            if key == prev_key:
                records[-1]["multiplicity"] += 1
                continue
            prev_key = key
            w = float(self.weights[idx])
            records.append(
                {
                    "user_index": int(self.users[idx]),
                    "item_index": int(self.items[idx]),
                    "multiplicity": 1,
                    "layer": int(self.layers[idx]),
                    "weight": w if np.isfinite(w) else None,
                }
            )
        return records


def filtrate(
    graph: WeightedBipartiteGraph, n: int, range_mode: str = "unit_interval"
) -> LayeredGraph:
    """Split edges into n equal-width weight bins.

    ``unit_interval`` spaces thresholds over [0, 1], which is the natural
    codomain of the decay weights; ``data_range`` spaces them over
    [W_min, W_max] of the observed weights. An edge with weight w lands in
    the layer whose half-open interval contains it; the top interval is
    closed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if range_mode not in RANGE_MODES:
        raise ValueError(f"unknown range_mode {range_mode!r}, expected one of {RANGE_MODES}")
    w = graph.weights
    if range_mode == "unit_interval":
        lo, hi = 0.0, 1.0
    else:
        lo, hi = float(w.min()), float(w.max())
        if hi == lo and n > 1:
            warnings.warn(
                "degenerate data_range (all weights equal); every edge goes to the top layer",
                stacklevel=2,
            )
    thresholds = lo + (hi - lo) * np.arange(n + 1, dtype=np.float64) / n
    # searchsorted against the interior thresholds gives the half-open bin;
    # weights at or above the last interior threshold fall through to layer n,
    # which closes the top interval.
    labels = np.searchsorted(thresholds[1:-1], w, side="right").astype(np.int64) + 1
    return LayeredGraph(graph=graph, n=n, thresholds=thresholds, labels=labels, range_mode=range_mode)


def leakage_filter(pss: PositiveSampleSet, split: SplitDataset) -> PositiveSampleSet:
    """Drop every pair that also appears in validation or test (all copies)."""
    bad = holdout_pair_keys(split)
    if bad.size == 0 or len(pss) == 0:
        return pss
    pos = np.searchsorted(bad, pss.pair_keys())
    pos = np.minimum(pos, bad.size - 1)
    keep = bad[pos] != pss.pair_keys()
    return PositiveSampleSet(
        users=pss.users[keep],
        items=pss.items[keep],
        layers=pss.layers[keep],
        weights=pss.weights[keep],
        num_users=pss.num_users,
        num_items=pss.num_items,
    )


def build_pss(layered: LayeredGraph, split: SplitDataset) -> PositiveSampleSet:
    """Layer-enhanced positive multiset: layer-i edges appear i times.

    Pairs are emitted layer-major with copies contiguous, then holdout
    pairs are filtered out. With n=1 this degenerates to the plain train
    edge set.
    """
    g = layered.graph
    chunks_u, chunks_i, chunks_l, chunks_w = [], [], [], []
    for layer in range(1, layered.n + 1):
        idx = layered.layer_edge_indices(layer)
        if idx.size == 0:
            continue
        chunks_u.append(np.repeat(g.users[idx], layer))
        chunks_i.append(np.repeat(g.items[idx], layer))
        chunks_l.append(np.full(idx.size * layer, layer, dtype=np.int64))
        chunks_w.append(np.repeat(g.weights[idx], layer))
    pss = PositiveSampleSet(
        users=np.concatenate(chunks_u) if chunks_u else np.empty(0, dtype=np.int64),
        items=np.concatenate(chunks_i) if chunks_i else np.empty(0, dtype=np.int64),
        layers=np.concatenate(chunks_l) if chunks_l else np.empty(0, dtype=np.int64),
        weights=np.concatenate(chunks_w) if chunks_w else np.empty(0, dtype=np.float64),
        num_users=g.num_users,
        num_items=g.num_items,
    )
    pss = leakage_filter(pss, split)
    if len(pss) == 0:
        raise ValueError("positive sample set is empty after leakage filtering")
    return pss


def train_positives(split: SplitDataset) -> PositiveSampleSet:
    """Plain positive set: every train edge once, leakage-filtered."""
    train = split.train
    pss = PositiveSampleSet(
        users=train.users.copy(),
        items=train.items.copy(),
        layers=np.ones(len(train), dtype=np.int64),
        weights=np.full(len(train), np.nan),
        num_users=split.num_users,
        num_items=split.num_items,
    )
    pss = leakage_filter(pss, split)
    if len(pss) == 0:
        raise ValueError("positive sample set is empty after leakage filtering")
    return pss


def recent_k_positives(train: InteractionLog, k: int) -> PositiveSampleSet:
    """Each user's k most recent interactions, multiplicity 1.

    Users with fewer than k interactions keep all of them. Timestamp ties
    prefer the smaller item index, so the selection is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    # sort by (user asc, time desc, item asc) and take the first k rows per user
    order = np.lexsort((train.items, -train.times, train.users))
    u = train.users[order]
    i = train.items[order]
    t = train.times[order]
    # rank of each row within its user block
    starts = np.r_[0, np.nonzero(np.diff(u))[0] + 1]
    rank = np.arange(u.shape[0]) - np.repeat(starts, np.diff(np.r_[starts, u.shape[0]]))
    keep = rank < k
    u, i, t = u[keep], i[keep], t[keep]
    return PositiveSampleSet(
        users=u,
        items=i,
        layers=np.zeros(u.shape[0], dtype=np.int64),
        weights=np.full(u.shape[0], np.nan),
        num_users=train.num_users,
        num_items=train.num_items,
    )
