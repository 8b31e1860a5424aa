"""Distilled predictors trained on provider outputs.

Two cheap parametric models replace provider calls at scale:

* DistilledTagModel — one logistic regression per cover-set tag over the
  item's semantic embedding; predicts how likely a tag applies to an item.
* DistilledLogicModel — a bilinear logistic scorer over tag-embedding pairs;
  predicts the probability of a directed logic edge between two tags.

Both are trained with plain full-batch gradient descent on binary
cross-entropy so the analytic gradients stay finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .coverset import CoverSet
from .knowledge import ItemRecord


class ShapeError(ValueError):
    """Sample embedding dimensions disagree with the model."""


class MissingFeatureError(ValueError):
    """An item lacks the semantic embedding required for prediction."""


@dataclass(frozen=True)
class DistillConfig:
    lr: float = 1.0
    epochs: int = 200
    seed: int = 0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss_and_grad(
    w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy of logistic(w.x + b) and its gradient."""
    z = x @ w + b
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    resid = (p - y) / len(y)
    return loss, x.T @ resid, float(np.sum(resid))


@dataclass
class DistilledTagModel:
    """Per-tag logistic regression over item semantic embeddings.

    Row r of `weights`/`bias` belongs to tag_ids[r]; prediction is
    logistic(weights[r] . E_i + bias[r]).
    """

    tag_ids: tuple[int, ...]
    weights: np.ndarray  # (n_tags, d_sem)
    bias: np.ndarray  # (n_tags,)
    loss_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def d_sem(self) -> int:
        return self.weights.shape[1]

    def predict_row(self, embedding: np.ndarray) -> np.ndarray:
        e = np.asarray(embedding, dtype=np.float64)
        if e.shape != (self.d_sem,):
            raise ShapeError(f"embedding has shape {e.shape}, expected ({self.d_sem},)")
        return _sigmoid(self.weights @ e + self.bias)

    def to_blob(self) -> dict:
        return {
            "kind": "tag",
            "d_sem": self.d_sem,
            "tag_ids": list(self.tag_ids),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_blob(cls, blob: Mapping) -> "DistilledTagModel":
        return cls(
            tag_ids=tuple(blob["tag_ids"]),
            weights=np.array(blob["weights"], dtype=np.float64).reshape(
                len(blob["tag_ids"]), blob["d_sem"]
            ),
            bias=np.array(blob["bias"], dtype=np.float64),
        )


def train_distilled_tag_model(
    samples: Sequence[tuple[np.ndarray, Iterable[int]]],
    cover: CoverSet,
    hyper: DistillConfig = DistillConfig(),
) -> DistilledTagModel:
    """Fit one independent logistic regression per cover-set tag.

    For each tag, positives are the samples carrying it and negatives are
    uniformly sampled from the remaining samples at a 1:1 ratio. Training is
    full-batch gradient descent for a fixed number of epochs; the summed
    per-epoch loss trace is attached to the returned model.
    """
    if not samples:
        raise ValueError("no training samples")
    embs = [np.asarray(e, dtype=np.float64) for e, _ in samples]
    d_sem = embs[0].shape[0]
    for e in embs:
        if e.shape != (d_sem,):
            raise ShapeError(f"sample embedding shape {e.shape} != ({d_sem},)")
    tag_sets = [frozenset(int(t) for t in tags) for _, tags in samples]
    cover_ids = set(cover.selected)
    for i, tags in enumerate(tag_sets):
        stray = tags - cover_ids
        if stray:
            raise ValueError(f"sample {i} has positives outside the cover set: {sorted(stray)}")

    x_all = np.stack(embs)
    tag_ids = tuple(sorted(cover.selected))
    rng = np.random.default_rng(hyper.seed)

    datasets: list[Optional[tuple[np.ndarray, np.ndarray]]] = []
    for t in tag_ids:
        pos_idx = [i for i, tags in enumerate(tag_sets) if t in tags]
        neg_pool = [i for i in range(len(samples)) if t not in tag_sets[i]]
        if not pos_idx or not neg_pool:
            datasets.append(None)
            continue
        neg_idx = rng.choice(neg_pool, size=len(pos_idx), replace=len(neg_pool) < len(pos_idx))
        idx = np.concatenate([pos_idx, neg_idx])
        y = np.concatenate([np.ones(len(pos_idx)), np.zeros(len(pos_idx))])
        datasets.append((x_all[idx], y))

    weights = np.zeros((len(tag_ids), d_sem), dtype=np.float64)
    bias = np.zeros(len(tag_ids), dtype=np.float64)
    trace: list[float] = []
    for _ in range(hyper.epochs):
        total = 0.0
        for r, ds in enumerate(datasets):
            if ds is None:
                continue
            x, y = ds
            loss, gw, gb = bce_loss_and_grad(weights[r], float(bias[r]), x, y)
            weights[r] -= hyper.lr * gw
            bias[r] -= hyper.lr * gb
            total += loss
        trace.append(total)
    return DistilledTagModel(tag_ids=tag_ids, weights=weights, bias=bias, loss_trace=trace)


def predict_tags(
    model: DistilledTagModel, item: ItemRecord, k: int
) -> list[tuple[int, float]]:
    """Top-k tags for an item by predicted probability (descending score,
    ties by smaller tag id); k is clamped to the cover size."""
    if item.semantic_embedding is None:
        raise MissingFeatureError(f"item {item.item_id} has no semantic embedding")
    probs = model.predict_row(item.semantic_embedding)
    ranked = sorted(zip(model.tag_ids, probs), key=lambda tp: (-tp[1], tp[0]))
    return [(t, float(p)) for t, p in ranked[: max(0, min(k, len(ranked)))]]


@dataclass
class DistilledLogicModel:
    """Bilinear logistic edge scorer: P(target|source) =
    logistic(e_src . W . e_tgt + b) over tag semantic embeddings."""

    w: np.ndarray  # (d_sem, d_sem)
    b: float
    loss_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def d_sem(self) -> int:
        return self.w.shape[0]

    def predict(self, e_src: np.ndarray, e_tgt: np.ndarray) -> float:
        e_src = np.asarray(e_src, dtype=np.float64)
        e_tgt = np.asarray(e_tgt, dtype=np.float64)
        if e_src.shape != (self.d_sem,) or e_tgt.shape != (self.d_sem,):
            raise ShapeError("embedding dimensions disagree with the model")
        return float(_sigmoid(np.array(e_src @ self.w @ e_tgt + self.b)))

    def to_blob(self) -> dict:
        return {"kind": "logic", "d_sem": self.d_sem, "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_blob(cls, blob: Mapping) -> "DistilledLogicModel":
        return cls(
            w=np.array(blob["w"], dtype=np.float64).reshape(blob["d_sem"], blob["d_sem"]),
            b=float(blob["b"]),
        )


def bilinear_loss_and_grad(
    w: np.ndarray, b: float, e_src: np.ndarray, e_tgt: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean BCE of logistic(e_src[i] . W . e_tgt[i] + b) and its gradient."""
    z = np.einsum("ij,jk,ik->i", e_src, w, e_tgt) + b
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    resid = (p - y) / len(y)
    gw = e_src.T @ (resid[:, None] * e_tgt)
    return loss, gw, float(np.sum(resid))


def train_distilled_logic_model(
    pairs: Sequence[tuple[str, str, int]],
    embedder: Callable[[str], np.ndarray],
    hyper: DistillConfig = DistillConfig(),
) -> DistilledLogicModel:
    """Fit the bilinear edge scorer on labeled (source, target) tag pairs.

    Labels must be binary; provider-generated pairs are the positives and
    uniform random pairs the negatives.
    """
    if not pairs:
        raise ValueError("no training pairs")
    e_src = np.stack([np.asarray(embedder(s), dtype=np.float64) for s, _, _ in pairs])
    e_tgt = np.stack([np.asarray(embedder(t), dtype=np.float64) for _, t, _ in pairs])
    if e_src.shape[1] != e_tgt.shape[1]:
        raise ShapeError("source and target embedding dimensions differ")
    y = np.array([int(l) for _, _, l in pairs], dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")

    d = e_src.shape[1]
    w = np.zeros((d, d), dtype=np.float64)
    b = 0.0
    trace: list[float] = []
    for _ in range(hyper.epochs):
        loss, gw, gb = bilinear_loss_and_grad(w, b, e_src, e_tgt, y)
        w -= hyper.lr * gw
        b -= hyper.lr * gb
        trace.append(loss)
    return DistilledLogicModel(w=w, b=b, loss_trace=trace)


def score_cover_pairs(
    model: DistilledLogicModel,
    sources: Mapping[int, str],
    targets: Mapping[int, str],
    embedder: Callable[[str], np.ndarray],
) -> Callable[[int, int], float]:
    """Precompute tag embeddings and return a (source id, target id) -> score
    function over the cover sets, suitable for graph construction."""
    src_emb = {t: np.asarray(embedder(text), dtype=np.float64) for t, text in sources.items()}
    tgt_emb = {t: np.asarray(embedder(text), dtype=np.float64) for t, text in targets.items()}

    def score(src_id: int, tgt_id: int) -> float:
        return model.predict(src_emb[src_id], tgt_emb[tgt_id])

    return score
