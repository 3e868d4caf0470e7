"""Embedding -> strategy-distribution classifiers, one per role, plus the
intra/inter similarity diagnostics.

Multinomial logistic regression (a single linear layer with a softmax head)
stands in for heavyweight sequence classifiers; the contract is only
embedding in, strategy distribution out, so anything stronger can slot in
behind the same interface later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ROLE_EE, ROLE_ER, Corpus, StrategyVocab, copy_dialogue, derive_seed
from .errors import ConfigError, DataError, NumericError
from .numcore import FeedForwardNet, TrainConfig, softmax, softmax_cross_entropy, train_net


@dataclass
class StrategyClassifier:
    role: str
    vocab: StrategyVocab
    net: FeedForwardNet

    def to_json(self) -> str:
        return json.dumps(
            {"role": self.role, "vocab": list(self.vocab.names), "net": self.net.to_dict()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "StrategyClassifier":
        obj = json.loads(text)
        return cls(
            role=obj["role"],
            vocab=StrategyVocab(obj["role"], tuple(obj["vocab"])),
            net=FeedForwardNet.from_dict(obj["net"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "StrategyClassifier":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def labeled_turns(corpus: Corpus, role: str):
    """All turns of a role that carry a strategy, as (X, integer labels)."""
    vocab = corpus.vocab(role)
    xs, ys = [], []
    for d in corpus.dialogues:
        for t in d.turns:
            if t.role == role and t.strategy is not None:
                xs.append(t.embedding)
                ys.append(vocab.index(t.strategy))
    if not xs:
        return np.zeros((0, corpus.embedding_dim)), np.zeros(0, dtype=int)
    return np.asarray(xs), np.asarray(ys, dtype=int)


def default_classifier_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(learning_rate=0.05, batch_size=64, epochs=120, seed=seed, optimizer="adam")


def train_classifier(X, y, role: str, vocab: StrategyVocab, config: TrainConfig | None = None) -> StrategyClassifier:
    """Fit the softmax head by cross-entropy; needs at least 2 distinct labels."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise DataError("need at least 2 distinct labels to train a classifier")
    if config is None:
        config = default_classifier_config()
    net = FeedForwardNet([X.shape[1], len(vocab)], ["identity"], seed=config.seed)
    train_net(net, X, y, softmax_cross_entropy, config)
    return StrategyClassifier(role=role, vocab=vocab, net=net)


def predict(clf: StrategyClassifier, embedding: np.ndarray):
    """(probability vector, one-hot argmax); ties go to the lowest index."""
    embedding = np.asarray(embedding, dtype=float)
    if not np.all(np.isfinite(embedding)):
        raise NumericError("non-finite embedding")
    logits = clf.net.forward(embedding.reshape(1, -1))[0]
    probs = softmax(logits)[0]
    onehot = np.zeros_like(probs)
    onehot[int(np.argmax(probs))] = 1.0
    return probs, onehot


def predict_batch(clf: StrategyClassifier, X: np.ndarray):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite embedding")
    probs = softmax(clf.net.forward(X))
    return probs, probs.argmax(axis=1)


def predict_strategy(clf: StrategyClassifier, embedding: np.ndarray) -> str:
    probs, _ = predict(clf, embedding)
    return clf.vocab.names[int(np.argmax(probs))]


def crossval(X, y, role: str, vocab: StrategyVocab, folds: int = 5, seed: int = 0, config: TrainConfig | None = None):
    """Stratified k-fold accuracy: returns (mean, std, per-fold accuracies)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < folds):
        small = classes[counts < folds]
        raise DataError(f"classes too small to stratify into {folds} folds: {small.tolist()}")
    rng = np.random.default_rng(derive_seed(seed, "crossval"))
    fold_of = np.zeros(len(y), dtype=int)
    for c in classes:
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = np.arange(len(idx)) % folds
    accs = []
    for f in range(folds):
        test = fold_of == f
        cfg = config or default_classifier_config(seed=derive_seed(seed, "fold", f) % (2**32))
        clf = train_classifier(X[~test], y[~test], role, vocab, cfg)
        _, pred = predict_batch(clf, X[test])
        accs.append(float(np.mean(pred == y[test])))
    accs = np.asarray(accs)
    return float(accs.mean()), float(accs.std()), accs.tolist()


def _cosine_matrix(E: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    U = E / norms
    return U @ U.T


def similarity_report(corpus: Corpus) -> dict:
    """Mean cosine over same-strategy utterance pairs (intra) and over
    unordered pairs of strategy centroids (inter)."""
    groups: dict[str, list[np.ndarray]] = {}
    for d in corpus.dialogues:
        for t in d.turns:
            if t.strategy is not None:
                groups.setdefault(f"{t.role}:{t.strategy}", []).append(t.embedding)
    populated = {k: np.asarray(v) for k, v in groups.items() if len(v) >= 2}
    if len(populated) < 2:
        raise DataError("need at least 2 strategies with at least 2 utterances each")
    intra_sum, intra_n = 0.0, 0
    centroids = []
    for key in sorted(populated):
        E = populated[key]
        cm = _cosine_matrix(E)
        iu = np.triu_indices(len(E), k=1)
        intra_sum += float(cm[iu].sum())
        intra_n += len(iu[0])
        centroids.append(E.mean(axis=0))
    C = np.asarray(centroids)
    ccm = _cosine_matrix(C)
    iu = np.triu_indices(len(C), k=1)
    return {
        "intra": intra_sum / intra_n,
        "inter": float(ccm[iu].mean()),
        "n_strategies": len(populated),
    }


def annotate(corpus: Corpus, ee_clf: StrategyClassifier, er_clf: StrategyClassifier) -> Corpus:
    """Fill missing strategies with classifier predictions; labeled turns keep
    their annotations."""
    clfs = {ROLE_EE: ee_clf, ROLE_ER: er_clf}
    if ee_clf.role != ROLE_EE or er_clf.role != ROLE_ER:
        raise ConfigError("classifier roles do not match annotate arguments")
    out = []
    for d in corpus.dialogues:
        nd = copy_dialogue(d)
        for t in nd.turns:
            if t.strategy is None:
                t.strategy = predict_strategy(clfs[t.role], t.embedding)
        out.append(nd)
    return Corpus(corpus.embedding_dim, corpus.ee_vocab, corpus.er_vocab, out)
