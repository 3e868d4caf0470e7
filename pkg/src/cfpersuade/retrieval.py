"""Strategy-to-utterance conversion for counterfactual actions.

A TF-IDF index over persuader utterances supports (a) picking the effect
strategy among a cause's graph children by cosine similarity to the
persuadee utterance, and (b) ranking candidate utterances of that strategy
against the utterances that historically followed the cause.  The random
baseline draws any non-greeting persuader utterance.

The idf form is normative for the on-disk index: idf = ln((1+N)/(1+df)) + 1,
tf = raw count, vectors L2-normalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ROLE_EE, ROLE_ER, Corpus, Turn, _tokenize, derive_seed
from .errors import DataError
from .grasp import CausalGraph

GREETING = "greeting"


@dataclass
class TfidfIndex:
    vocabulary: dict[str, int]
    idf: np.ndarray
    doc_vectors: list[dict[int, float]]  # sparse, L2-normalized
    strategies: list[str]
    texts: list[str]
    embeddings: list[np.ndarray]
    preceding_cause: list[str | None]  # EE strategy right before each ER turn
    er_vocab_order: list[str] = field(default_factory=list)
    strategy_to_docs: dict[str, list[int]] = field(default_factory=dict)
    _centroids: dict = field(default_factory=dict, repr=False, compare=False)
    _follow_centroids: dict = field(default_factory=dict, repr=False, compare=False)
    _top_actions: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.strategy_to_docs:
            for i, s in enumerate(self.strategies):
                self.strategy_to_docs.setdefault(s, []).append(i)

    def vector(self, text: str) -> dict[int, float]:
        counts: dict[int, float] = {}
        for tok in _tokenize(text):
            j = self.vocabulary.get(tok)
            if j is not None:
                counts[j] = counts.get(j, 0.0) + 1.0
        vec = {j: c * self.idf[j] for j, c in counts.items()}
        norm = np.sqrt(sum(v * v for v in vec.values()))
        if norm > 0:
            vec = {j: v / norm for j, v in vec.items()}
        return vec

    def to_json(self) -> str:
        return json.dumps(
            {
                "vocabulary": self.vocabulary,
                "idf": self.idf.tolist(),
                "docs": [
                    {
                        "vector": {str(j): v for j, v in vec.items()},
                        "strategy": s,
                        "text": t,
                        "embedding": [float(x) for x in e],
                        "preceding_cause": pc,
                    }
                    for vec, s, t, e, pc in zip(
                        self.doc_vectors,
                        self.strategies,
                        self.texts,
                        self.embeddings,
                        self.preceding_cause,
                    )
                ],
                "er_vocab_order": self.er_vocab_order,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TfidfIndex":
        obj = json.loads(text)
        docs = obj["docs"]
        return cls(
            vocabulary=obj["vocabulary"],
            idf=np.asarray(obj["idf"], dtype=float),
            doc_vectors=[{int(j): float(v) for j, v in d["vector"].items()} for d in docs],
            strategies=[d["strategy"] for d in docs],
            texts=[d["text"] for d in docs],
            embeddings=[np.asarray(d["embedding"], dtype=float) for d in docs],
            preceding_cause=[d["preceding_cause"] for d in docs],
            er_vocab_order=obj.get("er_vocab_order", []),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TfidfIndex":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _sparse_cos(a: dict[int, float], b: dict[int, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    return sum(v * b.get(j, 0.0) for j, v in a.items())


def _sparse_mean(vectors: list[dict[int, float]]) -> dict[int, float]:
    acc: dict[int, float] = {}
    for vec in vectors:
        for j, v in vec.items():
            acc[j] = acc.get(j, 0.0) + v
    n = max(len(vectors), 1)
    return {j: v / n for j, v in acc.items()}


def _cos_to_centroid(vec: dict[int, float], centroid: dict[int, float]) -> float:
    norm = np.sqrt(sum(v * v for v in centroid.values()))
    if norm == 0:
        return 0.0
    return _sparse_cos(vec, centroid) / norm


def build_index(corpus: Corpus) -> TfidfIndex:
    """Index every strategy-labeled ER turn; remembers which EE strategy each
    one followed."""
    texts, strategies, embeddings, preceding = [], [], [], []
    token_docs = []
    for d in corpus.dialogues:
        last_ee_strategy = None
        for t in d.turns:
            if t.role == ROLE_EE:
                last_ee_strategy = t.strategy
            elif t.role == ROLE_ER and t.strategy is not None:
                texts.append(t.text)
                strategies.append(t.strategy)
                embeddings.append(t.embedding)
                preceding.append(last_ee_strategy)
                token_docs.append(_tokenize(t.text))
    if not texts:
        raise DataError("no strategy-labeled ER turns to index")
    vocab: dict[str, int] = {}
    df: dict[str, int] = {}
    for toks in token_docs:
        for tok in sorted(set(toks)):
            if tok not in vocab:
                vocab[tok] = len(vocab)
            df[tok] = df.get(tok, 0) + 1
    n = len(texts)
    idf = np.zeros(len(vocab))
    for tok, j in vocab.items():
        idf[j] = np.log((1.0 + n) / (1.0 + df[tok])) + 1.0
    index = TfidfIndex(
        vocabulary=vocab,
        idf=idf,
        doc_vectors=[],
        strategies=strategies,
        texts=texts,
        embeddings=embeddings,
        preceding_cause=preceding,
        er_vocab_order=list(corpus.er_vocab.names),
    )
    for toks, text in zip(token_docs, texts):
        index.doc_vectors.append(index.vector(text))
    return index


def most_frequent_er_strategy(index: TfidfIndex) -> str:
    counts: dict[str, int] = {}
    for s in index.strategies:
        counts[s] = counts.get(s, 0) + 1
    return max(sorted(counts), key=lambda s: counts[s])


def strategy_centroid(index: TfidfIndex, strategy: str) -> dict[int, float]:
    """Mean TF-IDF vector of a strategy's utterances, pre-normalized so the
    cosine against it is a plain sparse dot product."""
    if strategy not in index._centroids:
        docs = index.strategy_to_docs.get(strategy, [])
        c = _sparse_mean([index.doc_vectors[i] for i in docs])
        norm = np.sqrt(sum(v * v for v in c.values()))
        if norm > 0:
            c = {j: v / norm for j, v in c.items()}
        index._centroids[strategy] = c
    return index._centroids[strategy]


def follow_centroid(index: TfidfIndex, cause_strategy: str) -> dict[int, float]:
    """Centroid of ER utterances that immediately followed the cause strategy."""
    if cause_strategy not in index._follow_centroids:
        docs = [i for i, pc in enumerate(index.preceding_cause) if pc == cause_strategy]
        index._follow_centroids[cause_strategy] = _sparse_mean(
            [index.doc_vectors[i] for i in docs]
        )
    return index._follow_centroids[cause_strategy]


def select_effect_strategy(
    graph: CausalGraph, x_ee: str, index: TfidfIndex, ee_utterance: str, seed: int
) -> str:
    """Sample up to 3 distinct graph children of the cause, then keep the one
    whose utterance centroid is most cosine-similar to the EE utterance.

    A cause with no children falls back to the corpus-wide most frequent ER
    strategy, so generation is total.
    """
    children = graph.children(x_ee)
    if not children:
        return most_frequent_er_strategy(index)
    rng = np.random.default_rng(derive_seed(seed, "effect", x_ee))
    want = min(3, len(children))
    sampled: set[str] = set()
    while len(sampled) < want:
        sampled.add(children[int(rng.integers(len(children)))])
    order = {s: i for i, s in enumerate(index.er_vocab_order)}
    candidates = sorted(sampled, key=lambda s: order.get(s, len(order)))
    query = index.vector(ee_utterance)
    best, best_cos = None, -np.inf
    for s in candidates:  # ties go to the lowest vocabulary index
        c = _sparse_cos(query, strategy_centroid(index, s))
        if c > best_cos:
            best, best_cos = s, c
    return best


def pick_counterfactual_action(
    index: TfidfIndex, effect_strategy: str, cause_strategy: str, seed: int
) -> Turn:
    """Uniform seeded pick among the top-3 candidates of the effect strategy,
    ranked by cosine to the follow-centroid of the cause strategy."""
    docs = index.strategy_to_docs.get(effect_strategy, [])
    if not docs:
        raise DataError(
            f"no ER utterances labeled {effect_strategy!r}: vocabulary/graph mismatch"
        )
    cache_key = (effect_strategy, cause_strategy)
    top = index._top_actions.get(cache_key)
    if top is None:
        centroid = follow_centroid(index, cause_strategy)
        scored = sorted(
            ((-_cos_to_centroid(index.doc_vectors[i], centroid), i) for i in docs),
        )
        top = [i for _, i in scored[: min(3, len(scored))]]
        index._top_actions[cache_key] = top
    rng = np.random.default_rng(derive_seed(seed, "action", effect_strategy, cause_strategy))
    pick = top[int(rng.integers(len(top)))]
    return Turn(
        index=-1,
        role=ROLE_ER,
        text=index.texts[pick],
        embedding=index.embeddings[pick],
        strategy=effect_strategy,
    )


def random_action_baseline(index: TfidfIndex, seed: int) -> Turn:
    """Uniform seeded draw over ER utterances whose strategy is not greeting."""
    support = [i for i, s in enumerate(index.strategies) if s != GREETING]
    if not support:
        raise DataError("no non-greeting ER utterances available")
    rng = np.random.default_rng(derive_seed(seed, "random-action"))
    pick = support[int(rng.integers(len(support)))]
    return Turn(
        index=-1,
        role=ROLE_ER,
        text=index.texts[pick],
        embedding=index.embeddings[pick],
        strategy=index.strategies[pick],
    )
