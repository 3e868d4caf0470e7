"""Donation prediction and the sparse terminal reward.

The predictor pools a dialogue into a fixed feature vector (mean persuadee
embedding, mean persuader embedding, final persuadee embedding) and applies
a ridge-regularized linear map, clipped to the donation range.  The pooling
spec is versioned so a sequence model can slot in behind the same interface.

Rewards are zero at every non-terminal step and the predicted donation at
the last step; cumulative reward series are exact prefix sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import DONATION_CAP, ROLE_EE, ROLE_ER, Corpus, Dialogue
from .errors import DataError

POOLING_VERSION = "mean-ee|mean-er|final-ee/v1"


@dataclass
class DdpModel:
    weights: np.ndarray  # pooled features + intercept
    embedding_dim: int
    pooling: str = POOLING_VERSION
    clip: bool = True

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "embedding_dim": self.embedding_dim,
                "pooling": self.pooling,
                "clip": self.clip,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DdpModel":
        obj = json.loads(text)
        return cls(
            weights=np.asarray(obj["weights"], dtype=float),
            embedding_dim=int(obj["embedding_dim"]),
            pooling=obj["pooling"],
            clip=bool(obj["clip"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DdpModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def pooled_features(dialogue: Dialogue, embedding_dim: int) -> np.ndarray:
    ee = [t.embedding for t in dialogue.turns if t.role == ROLE_EE]
    er = [t.embedding for t in dialogue.turns if t.role == ROLE_ER]
    mean_ee = np.mean(ee, axis=0) if ee else np.zeros(embedding_dim)
    mean_er = np.mean(er, axis=0) if er else np.zeros(embedding_dim)
    final_ee = ee[-1] if ee else np.zeros(embedding_dim)
    return np.concatenate([mean_ee, mean_er, final_ee])


def train_ddp(corpus: Corpus, ridge: float = 1e-3, seed: int = 0) -> DdpModel:
    """Closed-form ridge regression of clipped donations on pooled features."""
    dialogues = [d for d in corpus.dialogues if not d.counterfactual]
    if len(dialogues) < 20:
        raise DataError(f"need at least 20 dialogues with donations, got {len(dialogues)}")
    X = np.stack([pooled_features(d, corpus.embedding_dim) for d in dialogues])
    y = np.array([d.donation_ee for d in dialogues])
    Xb = np.column_stack([X, np.ones(len(X))])
    penalty = ridge * np.eye(Xb.shape[1])
    penalty[-1, -1] = 0.0  # intercept unpenalized
    w = np.linalg.solve(Xb.T @ Xb + penalty, Xb.T @ y)
    return DdpModel(weights=w, embedding_dim=corpus.embedding_dim)


def predict_donation(model: DdpModel, dialogue: Dialogue) -> float:
    x = pooled_features(dialogue, model.embedding_dim)
    pred = float(x @ model.weights[:-1] + model.weights[-1])
    if model.clip:
        pred = min(max(pred, 0.0), DONATION_CAP)
    return pred


def step_reward(model: DdpModel, dialogue: Dialogue, t: int) -> float:
    """Zero before the final step; the predicted donation at the final step.

    `t` indexes transitions: 0 .. n_states - 2.
    """
    n_states = sum(1 for turn in dialogue.turns if turn.role == ROLE_EE)
    last = n_states - 2
    if t < 0 or t > last:
        raise DataError(f"step {t} out of range [0, {last}] for dialogue {dialogue.id!r}")
    if t < last:
        return 0.0
    return predict_donation(model, dialogue)


def cumulative(rewards) -> np.ndarray:
    """Exact prefix sums of a reward sequence."""
    rewards = np.asarray(list(rewards), dtype=float)
    if rewards.size and not np.all(np.isfinite(rewards)):
        raise DataError("rewards must be finite")
    return np.cumsum(rewards)


@dataclass
class CumulativeRewardSeries:
    rewards: np.ndarray
    series: np.ndarray

    @classmethod
    def from_rewards(cls, rewards) -> "CumulativeRewardSeries":
        r = np.asarray(list(rewards), dtype=float)
        return cls(rewards=r, series=cumulative(r))

    @property
    def total(self) -> float:
        return float(self.series[-1]) if self.series.size else 0.0

    def to_csv(self, path) -> None:
        lines = ["k,cumulative_reward"]
        lines += [f"{k},{v!r}" for k, v in enumerate(self.series)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
