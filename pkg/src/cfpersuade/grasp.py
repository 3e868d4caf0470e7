"""Score-based causal discovery over strategy-count variables.

Greedy relaxation of the sparsest-permutation search: project permutations
to DAGs with grow-shrink parent selection under a Gaussian BIC, walk the
permutation space with tuck moves through a tiered, depth-limited DFS, then
keep only persuadee-cause -> persuader-effect edges.

The projection scorer has two interchangeable backends: a compiled extension
(`_grasp_core`, Cython) and a pure-python fallback, selected at import.
`benchmarks/bench_grasp.py` compares them.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _grasp_fallback
from .corpus import Corpus, StrategyVocab, derive_seed
from .errors import ConfigError, DataError

try:
    from . import _grasp_core as _backend

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _backend = _grasp_fallback
    HAVE_COMPILED = False

ProjectionScorer = _backend.ProjectionScorer
PythonProjectionScorer = _grasp_fallback.ProjectionScorer

_TOL = 1e-9


def backend_name() -> str:
    return _backend.BACKEND


@dataclass
class GraspConfig:
    depth: int = 3
    tier: int = 2
    penalty_c: float = 2.0
    seed: int = 0
    restarts: int = 5
    ridge: float = 1e-8

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.tier not in (0, 1, 2):
            raise ConfigError("tier must be 0, 1, or 2")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


@dataclass(frozen=True)
class Edge:
    cause: str
    effect: str
    score: float


@dataclass
class CausalGraph:
    edges: list[Edge] = field(default_factory=list)

    def __post_init__(self):
        self._check_acyclic()

    def _check_acyclic(self):
        children = {}
        nodes = set()
        for e in self.edges:
            children.setdefault(e.cause, []).append(e.effect)
            nodes.add(e.cause)
            nodes.add(e.effect)
        indeg = {v: 0 for v in nodes}
        for e in self.edges:
            indeg[e.effect] += 1
        queue = sorted(v for v in nodes if indeg[v] == 0)
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for w in children.get(v, ()):
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        if seen != len(nodes):
            raise DataError("graph has a cycle")

    def children(self, cause: str) -> list[str]:
        return sorted(e.effect for e in self.edges if e.cause == cause)

    def edge_pairs(self) -> set[tuple[str, str]]:
        return {(e.cause, e.effect) for e in self.edges}

    def to_json(self) -> str:
        return json.dumps(
            {
                "edges": [
                    {"cause": e.cause, "effect": e.effect, "score": e.score}
                    for e in sorted(self.edges, key=lambda e: (e.cause, e.effect))
                ]
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CausalGraph":
        obj = json.loads(text)
        return cls([Edge(e["cause"], e["effect"], float(e["score"])) for e in obj["edges"]])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CausalGraph":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class StrategyMatrix:
    data: np.ndarray  # standardized, n x p
    raw: np.ndarray  # raw counts for the kept columns
    names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    dropped: tuple[str, ...]
    ee_names: tuple[str, ...]
    er_names: tuple[str, ...]


def _standardize(raw: np.ndarray, names, ee_names, er_names) -> StrategyMatrix:
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)
    keep = stds > 0
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        warnings.warn(f"dropping constant strategy columns: {', '.join(dropped)}")
    kept_raw = raw[:, keep]
    data = (kept_raw - means[keep]) / stds[keep]
    kept_names = tuple(n for n, k in zip(names, keep) if k)
    return StrategyMatrix(
        data=data,
        raw=kept_raw,
        names=kept_names,
        means=means[keep],
        stds=stds[keep],
        dropped=dropped,
        ee_names=tuple(n for n in ee_names if n in kept_names),
        er_names=tuple(n for n in er_names if n in kept_names),
    )


def build_strategy_matrix(corpus: Corpus) -> StrategyMatrix:
    """Per-dialogue strategy usage counts, standardized column-wise."""
    names = list(corpus.ee_vocab.names) + list(corpus.er_vocab.names)
    col = {n: i for i, n in enumerate(names)}
    raw = np.zeros((len(corpus.dialogues), len(names)))
    for i, d in enumerate(corpus.dialogues):
        for turn in d.turns:
            if turn.strategy is None:
                raise DataError(
                    f"dialogue {d.id!r} turn {turn.index} lacks a strategy; annotate first"
                )
            raw[i, col[turn.strategy]] += 1.0
    return _standardize(raw, names, corpus.ee_vocab.names, corpus.er_vocab.names)


def make_scorer(data: np.ndarray, penalty_c: float = 2.0, ridge: float = 1e-8, compiled: bool | None = None):
    """Scorer over the column covariance; `compiled=None` picks the import-time backend."""
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    cov = data.T @ data / n
    if compiled is None:
        cls = ProjectionScorer
    elif compiled:
        if not HAVE_COMPILED:
            raise ConfigError("compiled scorer requested but extension not built")
        cls = _backend.ProjectionScorer
    else:
        cls = PythonProjectionScorer
    return cls(cov, n, penalty_c, ridge)


def local_score(v: int, parents, data: np.ndarray, penalty_c: float = 2.0, ridge: float = 1e-8) -> float:
    """Gaussian BIC (to maximize) of column v given a parent column set."""
    parents = sorted(set(int(u) for u in parents))
    if v in parents:
        raise ConfigError("v cannot be its own parent")
    scorer = make_scorer(data, penalty_c, ridge)
    mask = 0
    for u in parents:
        mask |= 1 << u
    return scorer.local_score(int(v), mask)


def project_dag(perm, data: np.ndarray, penalty_c: float = 2.0, ridge: float = 1e-8):
    """Project a permutation: returns ({child: parent set}, total score)."""
    scorer = make_scorer(data, penalty_c, ridge)
    masks, total = scorer.project(list(int(v) for v in perm))
    return {v: _mask_to_set(m) for v, m in enumerate(masks)}, total


def _mask_to_set(mask: int) -> frozenset:
    out = []
    while mask:
        out.append((mask & -mask).bit_length() - 1)
        mask &= mask - 1
    return frozenset(out)


def _ancestors(y: int, parents: list[int]) -> int:
    """Ancestor mask of y under parent masks (y excluded)."""
    seen = 0
    stack = parents[y]
    while stack:
        bit = stack & (-stack)
        stack &= stack - 1
        if not (seen & bit):
            seen |= bit
            stack |= parents[bit.bit_length() - 1] & ~seen
    return seen


def tuck(perm: list[int], x: int, y: int, parents: list[int]) -> list[int]:
    """Move y, plus the variables between x and y that are ancestors of y,
    to just before x; relative order inside both groups is preserved."""
    pos = {v: i for i, v in enumerate(perm)}
    ix, iy = pos[x], pos[y]
    if ix >= iy or not (parents[y] >> x) & 1:
        raise ConfigError(f"tuck requires x before y and x in parents(y); got {x}->{y}")
    anc = _ancestors(y, parents)
    between = perm[ix + 1 : iy]
    moved = [v for v in between if (anc >> v) & 1] + [y]
    kept = [v for v in between if not (anc >> v) & 1]
    return perm[:ix] + moved + [x] + kept + perm[iy + 1 :]


def _edge_candidates(perm: list[int], parents: list[int], tier: int) -> list[tuple[int, int]]:
    """Tuckable edges under the tier rule, ordered by (cause, effect) index.

    tier 0: covered edges only (parents(x) = parents(y) minus x);
    tier 1: singular edges (no interposed ancestor of y between x and y);
    tier 2: every edge.
    """
    pos = {v: i for i, v in enumerate(perm)}
    out = []
    for y in perm:
        mask = parents[y]
        while mask:
            x = (mask & -mask).bit_length() - 1
            mask &= mask - 1
            if tier == 0:
                if parents[x] != parents[y] & ~(1 << x):
                    continue
            elif tier == 1:
                anc = _ancestors(y, parents)
                between = perm[pos[x] + 1 : pos[y]]
                if any((anc >> v) & 1 for v in between):
                    continue
            out.append((x, y))
    out.sort()
    return out


def _dfs_strict(scorer, perm, parents, score, tier):
    """Tiers 0/1: commit the first strictly improving tuck, in candidate order."""
    for x, y in _edge_candidates(perm, parents, tier):
        perm2 = tuck(perm, x, y, parents)
        parents2, score2 = scorer.project(perm2)
        if score2 > score + _TOL:
            return perm2, parents2, score2
    return None


def _dfs_relaxed(scorer, perm, parents, root_score, depth, visited):
    """Tier 2: recurse through non-worsening tucks, commit on strict gain."""
    for x, y in _edge_candidates(perm, parents, 2):
        perm2 = tuck(perm, x, y, parents)
        key = tuple(perm2)
        if key in visited:
            continue
        parents2, score2 = scorer.project(perm2)
        if score2 > root_score + _TOL:
            return perm2, parents2, score2
        if depth > 1 and score2 >= root_score - _TOL:
            visited.add(key)
            hit = _dfs_relaxed(scorer, perm2, parents2, root_score, depth - 1, visited)
            if hit is not None:
                return hit
    return None


def _improve(scorer, perm, config: GraspConfig):
    parents, score = scorer.project(perm)
    improved = True
    while improved:
        improved = False
        for tier in range(config.tier + 1):
            if tier < 2:
                hit = _dfs_strict(scorer, perm, parents, score, tier)
            else:
                hit = _dfs_relaxed(scorer, perm, parents, score, config.depth, {tuple(perm)})
            if hit is not None:
                perm, parents, score = hit
                improved = True
                break
    return perm, parents, score


def _parents_to_edges(parents: list[int]) -> list[tuple[int, int]]:
    out = []
    for y, mask in enumerate(parents):
        while mask:
            x = (mask & -mask).bit_length() - 1
            mask &= mask - 1
            out.append((x, y))
    return sorted(out)


def search(matrix: StrategyMatrix, config: GraspConfig) -> CausalGraph:
    """Best projected DAG over seeded restarts.

    Deterministic: restart permutations derive from (seed, restart index);
    score ties across restarts break toward the lexicographically smallest
    edge set.
    """
    data = matrix.data
    n, p = data.shape
    if n < 5 * p:
        warnings.warn(f"n={n} below the recommended 5*p={5 * p} samples")
    scorer = make_scorer(data, config.penalty_c, config.ridge)
    best = None
    for r in range(config.restarts):
        rng = np.random.default_rng(derive_seed(config.seed, "grasp-restart", r))
        perm = [int(v) for v in rng.permutation(p)]
        perm, parents, score = _improve(scorer, perm, config)
        edges = _parents_to_edges(parents)
        if (
            best is None
            or score > best[0] + _TOL
            or (abs(score - best[0]) <= _TOL and edges < best[1])
        ):
            best = (score, edges, parents)
    score, edges, parents = best
    out = []
    for x, y in edges:
        gain = scorer.local_score(y, parents[y]) - scorer.local_score(y, parents[y] & ~(1 << x))
        out.append(Edge(matrix.names[x], matrix.names[y], float(gain)))
    return CausalGraph(out)


def orient_filter(graph: CausalGraph, ee_vocab: StrategyVocab, er_vocab: StrategyVocab):
    """Keep only EE-cause -> ER-effect edges; returns (graph, discarded count)."""
    kept = [e for e in graph.edges if e.cause in ee_vocab and e.effect in er_vocab]
    return CausalGraph(kept), len(graph.edges) - len(kept)


def bootstrap_stability(
    matrix: StrategyMatrix,
    config: GraspConfig,
    b: int = 100,
    workers: int = 1,
) -> dict[tuple[str, str], float]:
    """Edge appearance frequencies over B row resamples (search + orient filter).

    Each replicate draws its own seed from (config.seed, replicate index), so
    results do not depend on scheduling or worker count.
    """
    if b < 2:
        raise ConfigError("need at least 2 bootstrap replicates")
    n = matrix.raw.shape[0]
    ee_vocab = StrategyVocab("EE", matrix.ee_names)
    er_vocab = StrategyVocab("ER", matrix.er_names)

    def one(i: int) -> set[tuple[str, str]]:
        rng = np.random.default_rng(derive_seed(config.seed, "bootstrap", i))
        rows = rng.integers(0, n, size=n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sub = _standardize(matrix.raw[rows], matrix.names, matrix.ee_names, matrix.er_names)
            graph = search(sub, config)
            kept, _ = orient_filter(graph, ee_vocab, er_vocab)
        return kept.edge_pairs()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(b)))
    else:
        results = [one(i) for i in range(b)]
    counts: dict[tuple[str, str], int] = {}
    for pairs in results:
        for pair in pairs:
            counts[pair] = counts.get(pair, 0) + 1
    return {pair: c / b for pair, c in sorted(counts.items())}
