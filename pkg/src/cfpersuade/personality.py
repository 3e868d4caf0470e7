"""Turn-level trait regression: previous persuader action plus current
persuadee state in, Big-Five estimate out.

The first pair of every dialogue has no previous action; a zero vector is
the declared sentinel.  Evaluation pairs the usual regression metrics with
canonical correlations between predicted and ground-truth trait matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ROLE_EE, ROLE_ER, Corpus, Dialogue, OceanVector
from .errors import DataError
from .numcore import (
    FeedForwardNet,
    TrainConfig,
    cca,
    regression_metrics,
    squared_loss,
    train_net,
)


@dataclass
class Tp3m:
    net: FeedForwardNet
    embedding_dim: int

    def to_json(self) -> str:
        return json.dumps(
            {"embedding_dim": self.embedding_dim, "net": self.net.to_dict()}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "Tp3m":
        obj = json.loads(text)
        return cls(net=FeedForwardNet.from_dict(obj["net"]), embedding_dim=obj["embedding_dim"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Tp3m":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def trait_pairs(corpus: Corpus):
    """All (previous action, state) -> OCEAN training rows.

    One row per EE turn; the dialogue's OCEAN vector repeats across its rows.
    """
    xs, ys, dialogue_ids = [], [], []
    d_emb = corpus.embedding_dim
    for d in corpus.dialogues:
        if d.ocean is None:
            continue
        target = d.ocean.to_array()
        prev_action = np.zeros(d_emb)
        for t in d.turns:
            if t.role == ROLE_EE:
                xs.append(np.concatenate([prev_action, t.embedding]))
                ys.append(target)
                dialogue_ids.append(d.id)
            elif t.role == ROLE_ER:
                prev_action = t.embedding
    if not xs:
        raise DataError("no dialogues carry OCEAN ground truth")
    return np.asarray(xs), np.asarray(ys), dialogue_ids


def default_tp3m_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(learning_rate=1e-3, batch_size=64, epochs=150, seed=seed, optimizer="adam")


def train_tp3m(corpus: Corpus, config: TrainConfig | None = None, hidden: tuple[int, ...] = (64,)) -> Tp3m:
    X, Y, _ = trait_pairs(corpus)
    if config is None:
        config = default_tp3m_config()
    sizes = [X.shape[1], *hidden, 5]
    acts = ["tanh"] * len(hidden) + ["identity"]
    net = FeedForwardNet(sizes, acts, seed=config.seed)
    history = train_net(net, X, Y, squared_loss, config)
    model = Tp3m(net=net, embedding_dim=corpus.embedding_dim)
    model.history = history
    return model


def predict_ocean(model: Tp3m, a_prev: np.ndarray, s: np.ndarray, inventory_scale: bool = False):
    """Estimate the trait vector from one (previous action, state) pair.

    With inventory_scale the output is clamped to [1, 5]; returns
    (OceanVector, clamped flag), otherwise the raw OceanVector.
    """
    a_prev = np.asarray(a_prev, dtype=float)
    s = np.asarray(s, dtype=float)
    if a_prev.shape != (model.embedding_dim,) or s.shape != (model.embedding_dim,):
        raise DataError(
            f"expected two vectors of length {model.embedding_dim}, "
            f"got {a_prev.shape} and {s.shape}"
        )
    raw = model.net.forward(np.concatenate([a_prev, s]).reshape(1, -1))[0]
    vec = OceanVector.from_array(raw)
    if inventory_scale:
        return vec.clamped()
    return vec


def predict_ocean_batch(model: Tp3m, X: np.ndarray) -> np.ndarray:
    return model.net.forward(np.atleast_2d(X))


def dialogue_trait_estimates(model: Tp3m, dialogue: Dialogue) -> list[np.ndarray]:
    """Per-step trait estimates along a dialogue, one per EE turn."""
    out = []
    prev_action = np.zeros(model.embedding_dim)
    for t in dialogue.turns:
        if t.role == ROLE_EE:
            x = np.concatenate([prev_action, t.embedding]).reshape(1, -1)
            out.append(model.net.forward(x)[0])
        elif t.role == ROLE_ER:
            prev_action = t.embedding
    return out


def eval_tp3m(model: Tp3m, corpus: Corpus) -> dict:
    """Regression metrics of predictions against ground truth, pooled over
    all trait dimensions."""
    X, Y, _ = trait_pairs(corpus)
    pred = predict_ocean_batch(model, X)
    metrics = regression_metrics(pred.ravel(), Y.ravel())
    per_trait = {}
    for i, name in enumerate("ocean"):
        per_trait[name] = regression_metrics(pred[:, i], Y[:, i])
    metrics["per_trait"] = per_trait
    return metrics


def cca_report(model: Tp3m, corpus: Corpus, k: int = 4) -> np.ndarray:
    """Top-k canonical correlations between predicted and true trait matrices."""
    if len(corpus.dialogues) < 30:
        raise DataError("need at least 30 dialogues for a stable CCA report")
    X, Y, _ = trait_pairs(corpus)
    pred = predict_ocean_batch(model, X)
    corrs, _ = cca(pred, Y, k)
    return corrs
