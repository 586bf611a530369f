"""Select-style negative samplers.

All samplers return, per positive pair, one item the user has not
interacted with in train:

  rns     uniform over uninteracted items
  pns     probability proportional to item popularity ** alpha
  dns     hardest of `pool` uniform candidates under the current model
  dns_mn  one of the rank-M..N candidates out of N, softening the
          hard-negative window

Rejection sampling is capped; dense users fall back to explicit complement
enumeration so validity never depends on luck. Samplers keep no mutable
state beyond the caller's rng, so seeded runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionLog

__all__ = ["SamplerSpec", "NegativeSampler", "sample_negative"]

KINDS = ("rns", "pns", "dns", "dns_mn")

REJECTION_ROUNDS = 100


@dataclass(frozen=True)
class SamplerSpec:
    kind: str = "rns"
    alpha: float = 0.75
    pool: int = 10
    m: int = 2
    n: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}, expected one of {KINDS}")
        if self.pool < 1:
            raise ValueError("pool must be >= 1")
        if not (1 <= self.m <= self.n):
            raise ValueError("need 1 <= m <= n")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


class NegativeSampler:
    """A sampler spec bound to one training set's per-user item sets."""

    def __init__(self, spec: SamplerSpec, train: InteractionLog):
        self.spec = spec
        self.num_users = train.num_users
        self.num_items = train.num_items
        # sorted pair keys give O(log E) vectorized membership tests
        self._keys = np.sort(train.users * np.int64(self.num_items) + train.items)
        # CSR-style per-user item lists for complement fallbacks
        order = np.lexsort((train.items, train.users))
        self._items_by_user = train.items[order]
        counts = np.bincount(train.users, minlength=self.num_users)
        self._indptr = np.r_[0, np.cumsum(counts)]
        self.degree = counts
        if spec.kind == "pns":
            item_deg = np.bincount(train.items, minlength=self.num_items).astype(np.float64)
            weights = np.power(item_deg, spec.alpha)
            self._pop_cumsum = np.cumsum(weights)
            self._pop_weights = weights

    # --- membership helpers ------------------------------------------------
    def user_items(self, u: int) -> np.ndarray:
        """Sorted train items of user u."""
        return self._items_by_user[self._indptr[u] : self._indptr[u + 1]]

    def _interacted(self, users: np.ndarray, cands: np.ndarray) -> np.ndarray:
        keys = users * np.int64(self.num_items) + cands
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self._keys.size - 1)
        return self._keys[pos] == keys

    def _check_feasible(self, users: np.ndarray) -> None:
        full = self.degree[users] >= self.num_items
        if np.any(full):
            u = int(users[np.argmax(full)])
            raise ValueError(f"user {u} interacted with every item; no negative exists")

    # --- uniform / popularity candidate draws -------------------------------
    def _complement(self, u: int) -> np.ndarray:
        return np.setdiff1d(np.arange(self.num_items), self.user_items(u), assume_unique=True)

    def _draw_uniform_valid(self, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One uninteracted item per entry of `users` (entries may repeat)."""
        out = rng.integers(0, self.num_items, size=users.shape[0])
        bad = self._interacted(users, out)
        rounds = 0
        while np.any(bad) and rounds < REJECTION_ROUNDS:
            out[bad] = rng.integers(0, self.num_items, size=int(bad.sum()))
            bad = self._interacted(users, out)
            rounds += 1
        for idx in np.nonzero(bad)[0]:
            comp = self._complement(int(users[idx]))
            out[idx] = comp[rng.integers(0, comp.size)]
        return out

    def _draw_popularity_valid(self, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        total = self._pop_cumsum[-1]
        size = users.shape[0]
        if total > 0:
            out = np.searchsorted(self._pop_cumsum, rng.random(size) * total, side="right")
            bad = self._interacted(users, out)
            rounds = 0
            while np.any(bad) and rounds < REJECTION_ROUNDS:
                nbad = int(bad.sum())
                out[bad] = np.searchsorted(
                    self._pop_cumsum, rng.random(nbad) * total, side="right"
                )
                bad = self._interacted(users, out)
                rounds += 1
        else:
            out = np.zeros(size, dtype=np.int64)
            bad = np.ones(size, dtype=bool)
        for idx in np.nonzero(bad)[0]:
            comp = self._complement(int(users[idx]))
            w = self._pop_weights[comp]
            tot = w.sum()
            if tot > 0:
                out[idx] = comp[np.searchsorted(np.cumsum(w), rng.random() * tot, side="right")]
            else:
                out[idx] = comp[rng.integers(0, comp.size)]
        return out

    # --- public sampling API -------------------------------------------------
    def sample_batch(self, users: np.ndarray, model, rng: np.random.Generator) -> np.ndarray:
        """One negative per positive pair, using the model's current parameters."""
        users = np.asarray(users, dtype=np.int64)
        self._check_feasible(users)
        kind = self.spec.kind
        if kind == "rns":
            return self._draw_uniform_valid(users, rng)
        if kind == "pns":
            return self._draw_popularity_valid(users, rng)

        width = self.spec.pool if kind == "dns" else self.spec.n
        b = users.shape[0]
        cands = self._draw_uniform_valid(np.repeat(users, width), rng).reshape(b, width)
        scores = model.pair_scores(np.repeat(users, width), cands.ravel()).reshape(b, width)
        if kind == "dns":
            best = scores.max(axis=1, keepdims=True)
            # among score ties prefer the smallest item index
            tied = np.where(scores == best, cands, self.num_items)
            return tied.min(axis=1)
        # dns_mn: order by score descending (item index breaks ties), then
        # pick a rank uniformly from the M..N window
        order = np.lexsort((cands, -scores), axis=-1)
        ranks = rng.integers(self.spec.m - 1, self.spec.n, size=b)
        return cands[np.arange(b), order[np.arange(b), ranks]]

    def sample(self, u: int, p: int, model, rng: np.random.Generator) -> int:
        """Single-pair form of :meth:`sample_batch`; `p` is the paired positive."""
        return int(self.sample_batch(np.array([u], dtype=np.int64), model, rng)[0])


def sample_negative(sampler: NegativeSampler, u: int, p: int, model, rng) -> int:
    return sampler.sample(u, p, model, rng)
