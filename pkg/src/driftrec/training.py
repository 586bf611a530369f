"""Pairwise ranking training loop.

Minimizes -ln sigmoid(s_up - s_un) plus L2 over the positive multiset with
mini-batch Adam. Negatives are drawn with the model's current parameters
before each update. The weighted variant trains on the plain (multiplicity
one) edge set and scales each pair's loss by its recency weight instead of
duplicating pairs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import SplitDataset
from .models import EmbeddingModel, build_norm_adjacency, init_xavier, propagate_matrix
from .positives import PositiveSampleSet, train_positives
from .samplers import NegativeSampler, SamplerSpec

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingDiverged",
    "bpr_loss",
    "batch_gradients",
    "train_epoch",
    "fit",
]

VARIANTS = ("standard", "weighted_bpr")
OPTIMIZERS = ("adam", "sgd")
EPOCH_MODES = ("full_pass", "pi_sample")


class TrainingDiverged(RuntimeError):
    """Non-finite parameters detected during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 2048
    l2: float = 1e-4
    epochs: int = 500
    d: int = 64
    seed: int = 0
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    variant: str = "standard"
    eval_every: int = 10
    backbone: str = "mf"
    num_prop_layers: int = 3
    optimizer: str = "adam"
    epoch_mode: str = "full_pass"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epoch_mode not in EPOCH_MODES:
            raise ValueError(f"unknown epoch_mode {self.epoch_mode!r}")
        for name in ("lr", "batch_size", "l2", "d", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class AdamState:
    """First/second moment accumulators shaped like the embedding matrices."""

    def __init__(self, num_users: int, num_items: int, d: int,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m_user = np.zeros((num_users, d))
        self.v_user = np.zeros((num_users, d))
        self.m_item = np.zeros((num_items, d))
        self.v_item = np.zeros((num_items, d))

    def step(self, model: EmbeddingModel, grad_user: np.ndarray, grad_item: np.ndarray, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        deltas = []
        for m, v, g in ((self.m_user, self.v_user, grad_user),
                        (self.m_item, self.v_item, grad_item)):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            deltas.append(-lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps))
        model.add_to_params(deltas[0], deltas[1])


def bpr_loss(margin):
    """Loss -ln sigmoid(margin) and its derivative, numerically stable.

    Uses the softplus identity -ln sigmoid(x) = ln(1 + exp(-x)); the
    derivative is -sigmoid(-margin). Works on scalars and arrays.
    """
    loss = np.logaddexp(0.0, -np.asarray(margin, dtype=np.float64))
    grad = -expit(-np.asarray(margin, dtype=np.float64))
    if np.isscalar(margin) or np.ndim(margin) == 0:
        return float(loss), float(grad)
    return loss, grad


def batch_gradients(
    model: EmbeddingModel,
    users: np.ndarray,
    pos_items: np.ndarray,
    neg_items: np.ndarray,
    l2: float,
    pair_weights: np.ndarray | None = None,
):
    """Mean objective over one batch and dense gradients for both matrices.

    The objective per pair is w * bpr(margin) + l2/2 * (|e_u|^2 + |e_p|^2 +
    |e_n|^2) with w = 1 unless pair weights are given; regularization always
    acts on the base embeddings. For the propagation backbone the margin
    uses propagated embeddings, and the chain rule reuses the propagation
    operator itself (it is self-adjoint).
    """
    b = users.shape[0]
    base_u, base_i = model.user_emb, model.item_emb
    score_u, score_i = model.scoring_embeddings()

    ue = score_u[users]
    pe = score_i[pos_items]
    ne = score_i[neg_items]
    margin = np.einsum("ij,ij->i", ue, pe - ne)
    loss_vec, dmargin = bpr_loss(margin)
    if pair_weights is not None:
        loss_vec = loss_vec * pair_weights
        dmargin = dmargin * pair_weights
    coeff = (dmargin / b)[:, None]

    d = model.dim
    if model.backbone == "mf":
        grad_user = np.zeros((model.num_users, d))
        grad_item = np.zeros((model.num_items, d))
        np.add.at(grad_user, users, coeff * (pe - ne))
        np.add.at(grad_item, pos_items, coeff * ue)
        np.add.at(grad_item, neg_items, -coeff * ue)
    else:
        g_stack = np.zeros((model.num_users + model.num_items, d))
        np.add.at(g_stack, users, coeff * (pe - ne))
        np.add.at(g_stack, model.num_users + pos_items, coeff * ue)
        np.add.at(g_stack, model.num_users + neg_items, -coeff * ue)
        g_base = propagate_matrix(model.adjacency, g_stack, model.num_prop_layers)
        grad_user = g_base[: model.num_users]
        grad_item = g_base[model.num_users :]

    reg_rows_u = base_u[users]
    reg_rows_p = base_i[pos_items]
    reg_rows_n = base_i[neg_items]
    np.add.at(grad_user, users, (l2 / b) * reg_rows_u)
    np.add.at(grad_item, pos_items, (l2 / b) * reg_rows_p)
    np.add.at(grad_item, neg_items, (l2 / b) * reg_rows_n)
    reg = 0.5 * l2 * (
        np.einsum("ij,ij->i", reg_rows_u, reg_rows_u)
        + np.einsum("ij,ij->i", reg_rows_p, reg_rows_p)
        + np.einsum("ij,ij->i", reg_rows_n, reg_rows_n)
    )
    mean_loss = float(np.mean(loss_vec + reg))
    return mean_loss, grad_user, grad_item


def train_epoch(
    model: EmbeddingModel,
    pss: PositiveSampleSet,
    config: TrainConfig,
    adam: AdamState | None,
    split: SplitDataset,
    rng: np.random.Generator,
    sampler: NegativeSampler | None = None,
    pair_weights: np.ndarray | None = None,
    update_counter: dict | None = None,
) -> dict:
    """One pass over the positive multiset in shuffled mini-batches."""
    if len(pss) == 0:
        raise ValueError("empty positive sample set")
    if sampler is None:
        sampler = NegativeSampler(config.sampler, split.train)

    if config.epoch_mode == "full_pass":
        order = rng.permutation(len(pss))
    else:
        # fixed-|E| i.i.d. draws from the training distribution; uniform
        # indices into the multiset realize pair probabilities m/|set|
        order = rng.integers(0, len(pss), size=len(split.train))

    t0 = time.perf_counter()
    total_loss = 0.0
    seen = 0
    for start in range(0, order.shape[0], config.batch_size):
        idx = order[start : start + config.batch_size]
        users = pss.users[idx]
        pos = pss.items[idx]
        negs = sampler.sample_batch(users, model, rng)
        w = pair_weights[idx] if pair_weights is not None else None
        loss, grad_u, grad_i = batch_gradients(model, users, pos, negs, config.l2, w)
        if config.optimizer == "adam":
            adam.step(model, grad_u, grad_i, config.lr)
        else:
            model.add_to_params(-config.lr * grad_u, -config.lr * grad_i)
        total_loss += loss * idx.shape[0]
        seen += idx.shape[0]
        if update_counter is not None:
            for u, p in zip(users.tolist(), pos.tolist()):
                update_counter[(u, p)] = update_counter.get((u, p), 0) + 1

    if not (np.all(np.isfinite(model.user_emb)) and np.all(np.isfinite(model.item_emb))):
        raise TrainingDiverged(
            f"non-finite parameters after optimizer step {adam.step_count if adam else '?'}"
        )
    return {
        "loss": total_loss / seen,
        "pairs": seen,
        "wall_ms": (time.perf_counter() - t0) * 1000.0,
    }


def fit(
    split: SplitDataset,
    config: TrainConfig,
    pss: PositiveSampleSet | None = None,
    pair_weights: np.ndarray | None = None,
    ks: tuple[int, ...] = (20, 30),
    metrics_path: str | None = None,
    checkpoint_path: str | None = None,
    model: EmbeddingModel | None = None,
):
    """Train for the configured epoch budget; keep the best-validation model.

    Selection is by validation recall at the smallest k in `ks`. Returns
    (best model, history), where history holds one record per evaluation
    epoch. When a metrics path is given, each evaluation appends a
    line-delimited record there; when a checkpoint path is given, the file
    is rewritten on every validation improvement.
    """
    from .metrics import evaluate  # local import avoids a module cycle
    from .models import save_checkpoint

    if config.variant == "weighted_bpr" and pair_weights is None:
        raise ValueError("weighted_bpr needs per-pair weights")
    if pss is None:
        pss = train_positives(split)
    if model is None:
        adjacency = None
        if config.backbone == "lightgcn":
            adjacency = build_norm_adjacency(
                split.train.users, split.train.items, split.num_users, split.num_items
            )
        model = init_xavier(
            split.num_users,
            split.num_items,
            config.d,
            config.seed,
            backbone=config.backbone,
            num_prop_layers=config.num_prop_layers,
            adjacency=adjacency,
        )
    adam = AdamState(model.num_users, model.num_items, model.dim)
    sampler = NegativeSampler(config.sampler, split.train)
    rng = np.random.default_rng([config.seed, 1])

    select_k = min(ks)
    history: list[dict] = []
    best = None
    best_recall = -1.0
    metrics_file = open(metrics_path, "a") if metrics_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            stats = train_epoch(
                model, pss, config, adam, split, rng,
                sampler=sampler, pair_weights=pair_weights,
            )
            if epoch % config.eval_every != 0:
                continue
            record = {"epoch": epoch, "loss": stats["loss"]}
            if len(split.validation) > 0:
                report = evaluate(model, split, ks=ks, part="validation", per_user=False)
                for k in ks:
                    record[f"recall@{k}"] = report.aggregates[k]["recall"]
                    record[f"ndcg@{k}"] = report.aggregates[k]["ndcg"]
                if record[f"recall@{select_k}"] > best_recall:
                    best_recall = record[f"recall@{select_k}"]
                    best = (model.user_emb.copy(), model.item_emb.copy(), epoch)
                    if checkpoint_path:
                        save_checkpoint(model, checkpoint_path)
            history.append(record)
            if metrics_file:
                metrics_file.write(
                    json.dumps({**record, "wall_ms": stats["wall_ms"]}) + "\n"
                )
                metrics_file.flush()
    finally:
        if metrics_file:
            metrics_file.close()

    if best is not None:
        model.set_params(best[0], best[1])
        model.best_epoch = best[2]
    return model, history


def config_with(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **overrides)
