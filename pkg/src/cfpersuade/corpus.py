"""Dialogue corpus data model and JSONL persistence.

A corpus is a header line plus one JSON object per dialogue.  Dialogues
alternate persuadee (EE) and persuader (ER) turns; each turn carries a text,
an embedding of the corpus-wide dimension, and an optional strategy label
drawn from the role's vocabulary.  Donations are clipped to the cap once, at
ingest, so every downstream consumer sees clipped values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

ROLE_EE = "EE"
ROLE_ER = "ER"
ROLES = (ROLE_EE, ROLE_ER)

DONATION_CAP = 10.0

SOURCE_FACTUAL = "factual"
SOURCE_CF_ACTION = "cf-action"
SOURCE_CF_STATE = "cf-state"
TURN_SOURCES = (SOURCE_FACTUAL, SOURCE_CF_ACTION, SOURCE_CF_STATE)

OCEAN_NAMES = ("o", "c", "e", "a", "n")
OCEAN_LOW = 1.0
OCEAN_HIGH = 5.0


@dataclass(frozen=True)
class OceanVector:
    """Big-Five trait estimate on the 1-5 inventory scale."""

    o: float
    c: float
    e: float
    a: float
    n: float

    @classmethod
    def from_array(cls, arr) -> "OceanVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (5,):
            raise DataError(f"OCEAN vector must have 5 components, got shape {arr.shape}")
        return cls(*(float(x) for x in arr))

    def to_array(self) -> np.ndarray:
        return np.array([self.o, self.c, self.e, self.a, self.n], dtype=float)

    def clamped(self) -> tuple["OceanVector", bool]:
        """Clamp to the inventory range; flag whether any component moved."""
        arr = self.to_array()
        clipped = np.clip(arr, OCEAN_LOW, OCEAN_HIGH)
        return OceanVector.from_array(clipped), bool(np.any(clipped != arr))


@dataclass(frozen=True)
class StrategyVocab:
    role: str
    names: tuple[str, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r}")
        if len(set(self.names)) != len(self.names):
            raise DataError(f"duplicate strategy names in {self.role} vocabulary")

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown {self.role} strategy {name!r}") from None


@dataclass
class Turn:
    index: int
    role: str
    text: str
    embedding: np.ndarray
    strategy: str | None = None
    source: str = SOURCE_FACTUAL


@dataclass
class Dialogue:
    id: str
    turns: list[Turn]
    donation_ee: float
    ocean: OceanVector | None = None
    counterfactual: bool = False

    def turn_sources(self) -> list[str]:
        return [t.source for t in self.turns]


@dataclass
class Corpus:
    embedding_dim: int
    ee_vocab: StrategyVocab
    er_vocab: StrategyVocab
    dialogues: list[Dialogue] = field(default_factory=list)

    def vocab(self, role: str) -> StrategyVocab:
        if role == ROLE_EE:
            return self.ee_vocab
        if role == ROLE_ER:
            return self.er_vocab
        raise DataError(f"unknown role {role!r}")

    def __len__(self) -> int:
        return len(self.dialogues)


@dataclass(frozen=True)
class Transition:
    """One (state, action, next state) window of a dialogue."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    dialogue_id: str
    t: int
    terminal: bool


def clip_donation(amount: float) -> float:
    """Clip a donation to the cap; raises on negative or non-finite input."""
    amount = float(amount)
    if not math.isfinite(amount):
        raise DataError(f"donation must be finite, got {amount!r}")
    if amount < 0:
        raise DataError(f"donation must be nonnegative, got {amount!r}")
    return min(amount, DONATION_CAP)


def _stable_hash64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from heterogeneous parts (ints, strings).

    Python's builtin str hash is salted per process, so RNG streams keyed on
    dialogue ids must go through a content hash instead.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def _tokenize(text: str) -> list[str]:
    out, word = [], []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic feature-hashing embedder.

    Lowercases, splits on non-alphanumerics, hashes word unigrams and bigrams
    into `dim` signed buckets, then L2-normalizes.  Empty text maps to the
    zero vector.  Used as the stand-in embedder when no pretrained assets are
    around; everything downstream only assumes embeddings are real vectors.
    """
    if dim < 8:
        raise DataError(f"hash_embed needs dim >= 8, got {dim}")
    vec = np.zeros(dim, dtype=float)
    tokens = _tokenize(text)
    grams = list(tokens)
    grams.extend(f"{a}\x1f{b}" for a, b in zip(tokens, tokens[1:]))
    for gram in grams:
        h = _stable_hash64(f"{seed}\x1e{gram}".encode("utf-8"))
        bucket = h % dim
        sign = 1.0 if (h >> 32) & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def _check_dialogue(d: Dialogue, corpus: Corpus, where: str) -> None:
    if len(d.turns) < 2:
        raise DataError(f"{where}: dialogue {d.id!r} has fewer than 2 turns")
    for i, turn in enumerate(d.turns):
        if turn.role not in ROLES:
            raise DataError(f"{where}: dialogue {d.id!r} turn {i} has unknown role {turn.role!r}")
        if i > 0 and turn.role == d.turns[i - 1].role:
            raise DataError(
                f"{where}: dialogue {d.id!r} has consecutive {turn.role} turns at {i - 1},{i}"
            )
        if turn.embedding.shape != (corpus.embedding_dim,):
            raise DataError(
                f"{where}: dialogue {d.id!r} turn {i} embedding has length "
                f"{turn.embedding.shape[0]}, expected {corpus.embedding_dim}"
            )
        if turn.strategy is not None and turn.strategy not in corpus.vocab(turn.role):
            raise DataError(
                f"{where}: dialogue {d.id!r} turn {i} has unknown {turn.role} "
                f"strategy {turn.strategy!r}"
            )
        if turn.source not in TURN_SOURCES:
            raise DataError(f"{where}: dialogue {d.id!r} turn {i} has unknown source {turn.source!r}")
    if d.ocean is not None:
        arr = d.ocean.to_array()
        if not d.counterfactual and (np.any(arr < OCEAN_LOW) or np.any(arr > OCEAN_HIGH)):
            raise DataError(f"{where}: dialogue {d.id!r} OCEAN ground truth outside [1, 5]")


def validate(corpus: Corpus) -> Corpus:
    seen = set()
    for d in corpus.dialogues:
        if d.id in seen:
            raise DataError(f"duplicate dialogue id {d.id!r}")
        seen.add(d.id)
        _check_dialogue(d, corpus, "validate")
    return corpus


def load_corpus(path) -> Corpus:
    """Load and validate a JSONL corpus; donations are clipped on the way in."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    corpus = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {lineno}: invalid JSON ({exc.msg})") from None
            if lineno == 1:
                try:
                    corpus = Corpus(
                        embedding_dim=int(obj["embedding_dim"]),
                        ee_vocab=StrategyVocab(ROLE_EE, tuple(obj["ee_vocab"])),
                        er_vocab=StrategyVocab(ROLE_ER, tuple(obj["er_vocab"])),
                    )
                except KeyError as exc:
                    raise DataError(f"{path} line 1: header missing key {exc}") from None
                if corpus.embedding_dim <= 0:
                    raise DataError(f"{path} line 1: embedding_dim must be positive")
                continue
            try:
                dialogue = _dialogue_from_obj(obj)
            except DataError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from None
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path} line {lineno}: malformed dialogue ({exc})") from None
            try:
                _check_dialogue(dialogue, corpus, "load")
            except DataError as exc:
                raise DataError(f"{path} line {lineno}: {exc}") from None
            corpus.dialogues.append(dialogue)
    if corpus is None:
        raise DataError(f"{path}: empty file, expected a header line")
    return validate(corpus)


def _dialogue_from_obj(obj: dict) -> Dialogue:
    turns = []
    for t in obj["turns"]:
        emb = np.asarray(t["embedding"], dtype=float)
        if emb.ndim != 1:
            raise DataError("turn embedding must be a flat list")
        turns.append(
            Turn(
                index=int(t["t"]),
                role=str(t["role"]),
                text=str(t["text"]),
                embedding=emb,
                strategy=t.get("strategy"),
                source=t.get("source", SOURCE_FACTUAL),
            )
        )
    ocean = obj.get("ocean")
    return Dialogue(
        id=str(obj["id"]),
        turns=turns,
        donation_ee=clip_donation(obj["donation_ee"]),
        ocean=None if ocean is None else OceanVector.from_array(ocean),
        counterfactual=bool(obj.get("counterfactual", False)),
    )


def _dialogue_to_obj(d: Dialogue) -> dict:
    turns = []
    for t in d.turns:
        obj = {
            "t": t.index,
            "role": t.role,
            "text": t.text,
            "embedding": [float(x) for x in t.embedding],
            "strategy": t.strategy,
        }
        if t.source != SOURCE_FACTUAL:
            obj["source"] = t.source
        turns.append(obj)
    return {
        "id": d.id,
        "donation_ee": d.donation_ee,
        "ocean": None if d.ocean is None else [float(x) for x in d.ocean.to_array()],
        "counterfactual": d.counterfactual,
        "turns": turns,
    }


def save_corpus(corpus: Corpus, path, header_extra: dict | None = None) -> None:
    """Write the JSONL form: header line then one dialogue per line, LF-terminated."""
    path = Path(path)
    header = {
        "embedding_dim": corpus.embedding_dim,
        "ee_vocab": list(corpus.ee_vocab.names),
        "er_vocab": list(corpus.er_vocab.names),
    }
    if header_extra:
        header.update(header_extra)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for d in corpus.dialogues:
            fh.write(json.dumps(_dialogue_to_obj(d), ensure_ascii=False) + "\n")


def split(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Dialogue-level disjoint split with |train| = floor(train_fraction * M)."""
    if not (0.0 < train_fraction < 1.0):
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    m = len(corpus.dialogues)
    if m < 2:
        raise DataError(f"need at least 2 dialogues to split, got {m}")
    order = np.random.default_rng(seed).permutation(m)
    n_train = int(math.floor(train_fraction * m))
    train_ids = set(order[:n_train].tolist())
    train = [d for i, d in enumerate(corpus.dialogues) if i in train_ids]
    test = [d for i, d in enumerate(corpus.dialogues) if i not in train_ids]
    mk = lambda ds: Corpus(corpus.embedding_dim, corpus.ee_vocab, corpus.er_vocab, ds)
    return mk(train), mk(test)


def to_transitions(corpus: Corpus) -> list[Transition]:
    """Extract (s_t, a_t, s_{t+1}) windows: EE turn, following ER turn, following EE turn.

    The final window of each dialogue is marked terminal.
    """
    out: list[Transition] = []
    for d in corpus.dialogues:
        for i, turn in enumerate(d.turns):
            if i > 0 and turn.role == d.turns[i - 1].role:
                raise DataError(f"dialogue {d.id!r} has consecutive {turn.role} turns")
        windows = []
        for i in range(len(d.turns) - 2):
            a, b, c = d.turns[i], d.turns[i + 1], d.turns[i + 2]
            if a.role == ROLE_EE and b.role == ROLE_ER and c.role == ROLE_EE:
                windows.append((a, b, c))
        for t, (a, b, c) in enumerate(windows):
            out.append(
                Transition(
                    s=a.embedding,
                    a=b.embedding,
                    s_next=c.embedding,
                    dialogue_id=d.id,
                    t=t,
                    terminal=(t == len(windows) - 1),
                )
            )
    return out


def ee_states(dialogue: Dialogue) -> list[Turn]:
    return [t for t in dialogue.turns if t.role == ROLE_EE]


def er_actions(dialogue: Dialogue) -> list[Turn]:
    return [t for t in dialogue.turns if t.role == ROLE_ER]


def copy_dialogue(d: Dialogue) -> Dialogue:
    return Dialogue(
        id=d.id,
        turns=[replace(t, embedding=t.embedding.copy()) for t in d.turns],
        donation_ee=d.donation_ee,
        ocean=d.ocean,
        counterfactual=d.counterfactual,
    )
