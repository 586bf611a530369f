"""Top-k ranking evaluation.

Scores every item per evaluated user, excludes that user's training items,
breaks score ties by ascending item index, and reports mean recall and NDCG
at each cutoff over users with at least one held-out positive.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import SplitDataset
from .models import EmbeddingModel

__all__ = [
    "EvalReport",
    "rank_items",
    "recall_at_k",
    "ndcg_at_k",
    "evaluate",
    "margin_surrogate",
]


@dataclass(frozen=True)
class EvalReport:
    ks: tuple[int, ...]
    aggregates: dict
    users_evaluated: int
    per_user: list | None

    def to_dict(self) -> dict:
        doc = {
            "users_evaluated": self.users_evaluated,
            "metrics": {
                str(k): dict(self.aggregates[k]) for k in self.ks
            },
        }
        if self.per_user is not None:
            doc["per_user"] = self.per_user
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(["k", "recall", "ndcg", "users_evaluated"])
        for k in self.ks:
            writer.writerow([
                k,
                repr(self.aggregates[k]["recall"]),
                repr(self.aggregates[k]["ndcg"]),
                self.users_evaluated,
            ])


def rank_items(model: EmbeddingModel, user: int, exclude: np.ndarray) -> np.ndarray:
    """All items ordered by descending score, ties by ascending index,
    with excluded items removed."""
    scores = model.score_all(user)
    order = np.argsort(-scores, kind="stable")
    if exclude.size:
        keep = np.ones(scores.shape[0], dtype=bool)
        keep[exclude] = False
        order = order[keep[order]]
    return order


def recall_at_k(ranked: np.ndarray, positives: np.ndarray, k: int) -> float:
    if positives.size == 0:
        raise ValueError("recall undefined without positives")
    hits = np.intersect1d(ranked[:k], positives).size
    return hits / positives.size


def ndcg_at_k(ranked: np.ndarray, positives: np.ndarray, k: int) -> float:
    if positives.size == 0:
        raise ValueError("ndcg undefined without positives")
    top = ranked[:k]
    pos_in_top = np.isin(top, positives)
    ranks = np.nonzero(pos_in_top)[0] + 1
    dcg = float(np.sum(1.0 / np.log2(ranks + 1.0)))
    ideal = np.arange(1, min(k, positives.size) + 1)
    idcg = float(np.sum(1.0 / np.log2(ideal + 1.0)))
    return dcg / idcg


def _positives_by_user(split: SplitDataset, part: str) -> dict[int, np.ndarray]:
    log = {"validation": split.validation, "test": split.test, "train": split.train}[part]
    out: dict[int, np.ndarray] = {}
    if len(log) == 0:
        return out
    order = np.argsort(log.users, kind="stable")
    users = log.users[order]
    items = log.items[order]
    starts = np.nonzero(np.r_[True, users[1:] != users[:-1]])[0]
    bounds = np.r_[starts, users.shape[0]]
    for j, s in enumerate(starts):
        out[int(users[s])] = np.unique(items[s : bounds[j + 1]])
    return out


def evaluate(
    model: EmbeddingModel,
    split: SplitDataset,
    ks: tuple[int, ...] = (20, 30),
    part: str = "test",
    per_user: bool = True,
) -> EvalReport:
    """Mean recall and NDCG at each cutoff over users with held-out positives."""
    if part not in ("validation", "test", "train"):
        raise ValueError(f"unknown part {part!r}")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] <= 0:
        raise ValueError("cutoffs must be positive")
    pos_by_user = _positives_by_user(split, part)
    train_by_user = _positives_by_user(split, "train") if part != "train" else {}

    sums = {k: {"recall": 0.0, "ndcg": 0.0} for k in ks}
    records = [] if per_user else None
    n_users = 0
    for user in sorted(pos_by_user):
        positives = pos_by_user[user]
        exclude = train_by_user.get(user, np.empty(0, dtype=np.int64))
        ranked = rank_items(model, user, exclude)
        n_users += 1
        rec = {"user": user, "num_pos": int(positives.size)}
        for k in ks:
            r = recall_at_k(ranked, positives, k)
            n = ndcg_at_k(ranked, positives, k)
            sums[k]["recall"] += r
            sums[k]["ndcg"] += n
            rec[f"recall@{k}"] = r
            rec[f"ndcg@{k}"] = n
        if per_user:
            records.append(rec)

    aggregates = {
        k: {
            "recall": sums[k]["recall"] / n_users if n_users else 0.0,
            "ndcg": sums[k]["ndcg"] / n_users if n_users else 0.0,
        }
        for k in ks
    }
    return EvalReport(ks=ks, aggregates=aggregates, users_evaluated=n_users, per_user=records)


def margin_surrogate(model: EmbeddingModel, user: int, item: int) -> float:
    """Smooth rank surrogate 1 / (1 + sum_q exp(s_uq - s_up)) in (0, 1).

    The sum runs over every other item; computed through logsumexp so large
    score gaps cannot overflow.
    """
    scores = model.score_all(user)
    diffs = np.delete(scores - scores[item], item)
    return float(np.exp(-logsumexp(np.r_[0.0, diffs])))
