"""Counterfactual next-state inference and counterfactual database construction.

Two engines with identical counterfactual semantics:

- residual-SCM: fit g(s, a, traits) -> s_next by least squares, abduct the
  exogenous noise as the factual residual, replay with the alternative
  action (abduction - action - prediction).  Replaying the factual action
  reproduces the factual next state bit-for-bit by construction.
- kernel quantile regression: read off the conditional quantile level the
  factual outcome occupied, then evaluate the same level under the
  alternative action's conditional distribution.  No noise estimate needed.

A database is one counterfactual pass over the corpus: at every exchange the
persuadee strategy is classified, an alternative persuader action is
retrieved (causal-graph guided or random baseline), traits are estimated
from the factual pair, and the engine produces the revised next state.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    ROLE_EE,
    ROLE_ER,
    SOURCE_CF_ACTION,
    SOURCE_CF_STATE,
    Corpus,
    Dialogue,
    Transition,
    Turn,
    derive_seed,
    to_transitions,
)
from .errors import ConfigError, DataError, NumericError
from .grasp import CausalGraph
from .numcore import FeedForwardNet, TrainConfig, pca, squared_loss, train_net
from .personality import Tp3m, dialogue_trait_estimates
from .retrieval import (
    TfidfIndex,
    build_index,
    pick_counterfactual_action,
    random_action_baseline,
    select_effect_strategy,
)
from .strategy import StrategyClassifier, predict_strategy

TAU_EPS_GUARD = np.log(1e-300)


def _context(s: np.ndarray, a: np.ndarray, traits: np.ndarray) -> np.ndarray:
    return np.concatenate([s, a, traits])


@dataclass
class ScmModel:
    net: FeedForwardNet
    embedding_dim: int
    residuals: dict[tuple[str, int], np.ndarray]
    residual_rms: float

    def predict(self, s, a, traits) -> np.ndarray:
        x = _context(np.asarray(s, float), np.asarray(a, float), np.asarray(traits, float))
        if x.shape[0] != self.net.sizes[0]:
            raise DataError(f"context length {x.shape[0]} != model input {self.net.sizes[0]}")
        return self.net.forward(x.reshape(1, -1))[0]


def fit_scm(
    transitions: list[Transition],
    trait_estimates: dict[tuple[str, int], np.ndarray],
    config: TrainConfig | None = None,
    hidden: tuple[int, ...] = (),
) -> ScmModel:
    """Least-squares fit of the next-state map; stores per-transition residuals.

    With no hidden layers the minimizer is computed in closed form (ridge
    1e-8 for rank safety); hidden layers fall back to minibatch training.
    """
    if len(transitions) < 50:
        raise DataError(f"need at least 50 transitions to fit the SCM, got {len(transitions)}")
    d = transitions[0].s.shape[0]
    X = np.stack([
        _context(tr.s, tr.a, trait_estimates[(tr.dialogue_id, tr.t)]) for tr in transitions
    ])
    Y = np.stack([tr.s_next for tr in transitions])
    if hidden:
        cfg = config or TrainConfig(learning_rate=1e-3, batch_size=64, epochs=150, seed=0)
        sizes = [X.shape[1], *hidden, d]
        acts = ["relu"] * len(hidden) + ["identity"]
        net = FeedForwardNet(sizes, acts, seed=cfg.seed)
        train_net(net, X, Y, squared_loss, cfg)
    else:
        net = FeedForwardNet([X.shape[1], d], ["identity"], seed=0)
        Xb = np.column_stack([X, np.ones(len(X))])
        gram = Xb.T @ Xb + 1e-8 * np.eye(Xb.shape[1])
        coef = np.linalg.solve(gram, Xb.T @ Y)
        net.weights[0] = coef[:-1]
        net.biases[0] = coef[-1]
    pred = net.forward(X)
    residuals = {}
    for tr, p, y in zip(transitions, pred, Y):
        residuals[(tr.dialogue_id, tr.t)] = y - p
    rms = float(np.sqrt(np.mean((Y - pred) ** 2)))
    return ScmModel(net=net, embedding_dim=d, residuals=residuals, residual_rms=rms)


def counterfactual_scm(model: ScmModel, s, a_prime, traits, eps) -> np.ndarray:
    """Abduction already done: g(s, a', traits) + eps."""
    eps = np.asarray(eps, dtype=float)
    out = model.predict(s, a_prime, traits)
    if eps.shape != out.shape:
        raise DataError(f"eps has shape {eps.shape}, expected {out.shape}")
    return out + eps


@dataclass
class KqrEngine:
    projector: object  # PcaModel over raw contexts
    bandwidth: float
    contexts: np.ndarray  # projected, n x dproj
    targets: np.ndarray  # n x q
    sort_orders: np.ndarray  # q x n argsort of targets per dim
    sorted_targets: np.ndarray  # q x n
    embedding_dim: int
    trait_scale: float = 1.0

    @property
    def n(self) -> int:
        return self.contexts.shape[0]


def fit_kqr(
    transitions: list[Transition],
    trait_estimates: dict[tuple[str, int], np.ndarray],
    pca_dim: int = 16,
    seed: int = 0,
    trait_scale: float = 1.0,
    bandwidth_scale: float = 0.3,
) -> KqrEngine:
    """Store projected training triples; bandwidth from the median pairwise
    distance of at most 1000 sampled projected state-action contexts, shrunk
    by bandwidth_scale.

    Only the (state, action) block is PCA-compressed; the 5 trait dimensions
    are appended after projection (scaled by trait_scale) so they refine the
    neighborhoods without costing state-action resolution.  The bandwidth is
    computed on the state-action block alone, making engines with and
    without trait input exactly comparable.  The raw median-pairwise value
    concentrates no mass in 16 dimensions (all kernel weights come out
    nearly equal and the conditionals collapse to marginals), so the usable
    bandwidth is a fraction of it.
    """
    if len(transitions) < 50:
        raise DataError(f"need at least 50 transitions to fit KQR, got {len(transitions)}")
    X_sa = np.stack([np.concatenate([tr.s, tr.a]) for tr in transitions])
    L = np.stack([trait_estimates[(tr.dialogue_id, tr.t)] for tr in transitions])
    Y = np.stack([tr.s_next for tr in transitions])
    dproj = min(pca_dim, X_sa.shape[1])
    projector = pca(X_sa, dproj)
    Z_sa = projector.transform(X_sa)
    Z = np.column_stack([Z_sa, trait_scale * L])
    rng = np.random.default_rng(derive_seed(seed, "kqr-bandwidth"))
    k = min(1000, len(Z_sa))
    idx = rng.choice(len(Z_sa), size=k, replace=False)
    S = Z_sa[idx]
    d2 = np.sum((S[:, None, :] - S[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(k, k=1)
    h = float(np.sqrt(np.median(d2[iu]))) if len(iu[0]) else 1.0
    h *= bandwidth_scale
    if h <= 0:
        h = 1.0
    orders = np.argsort(Y, axis=0, kind="stable").T
    sorted_targets = np.take_along_axis(Y.T, orders, axis=1)
    return KqrEngine(
        projector=projector,
        bandwidth=h,
        contexts=Z,
        targets=Y,
        sort_orders=orders,
        sorted_targets=sorted_targets,
        embedding_dim=transitions[0].s.shape[0],
        trait_scale=trait_scale,
    )


def _kernel_weights(engine: KqrEngine, s, a, traits) -> np.ndarray:
    sa = np.concatenate([np.asarray(s, float), np.asarray(a, float)])
    z_sa = engine.projector.transform(sa.reshape(1, -1))[0]
    z = np.concatenate([z_sa, engine.trait_scale * np.asarray(traits, float)])
    d2 = np.sum((engine.contexts - z) ** 2, axis=1)
    logw = -d2 / (2.0 * engine.bandwidth**2)
    if float(np.max(logw)) < TAU_EPS_GUARD:
        raise NumericError("query context out of kernel support: all weights underflow")
    return np.exp(logw)


def kqr_tau(engine: KqrEngine, s, a, traits, y) -> np.ndarray:
    """Per-dimension weighted CDF level of y under the factual context,
    clamped to [1/(n+1), n/(n+1)]."""
    y = np.asarray(y, dtype=float)
    q = engine.targets.shape[1]
    if y.shape != (q,):
        raise DataError(f"y has shape {y.shape}, expected ({q},)")
    w = _kernel_weights(engine, s, a, traits)
    n = engine.n
    lo, hi = 1.0 / (n + 1), n / (n + 1)
    taus = np.empty(q)
    for j in range(q):
        order = engine.sort_orders[j]
        cum = np.cumsum(w[order])
        total = cum[-1]
        pos = int(np.searchsorted(engine.sorted_targets[j], y[j], side="right")) - 1
        f = 0.0 if pos < 0 else float(cum[pos]) / total
        taus[j] = min(max(f, lo), hi)
    return taus


def kqr_counterfactual(engine: KqrEngine, s, a_prime, traits, taus) -> np.ndarray:
    """Left-continuous weighted quantile of the training targets at the
    abducted levels, weighted by the alternative-action context."""
    taus = np.asarray(taus, dtype=float)
    q = engine.targets.shape[1]
    if taus.shape != (q,):
        raise DataError(f"taus has shape {taus.shape}, expected ({q},)")
    w = _kernel_weights(engine, s, a_prime, traits)
    out = np.empty(q)
    for j in range(q):
        order = engine.sort_orders[j]
        cum = np.cumsum(w[order])
        total = cum[-1]
        k = int(np.searchsorted(cum, taus[j] * total, side="left"))
        k = min(k, engine.n - 1)
        out[j] = engine.sorted_targets[j, k]
    return out


@dataclass
class CfDatabase:
    index: int
    dialogues: list[Dialogue]
    provenance: dict = field(default_factory=dict)


def transition_traits(
    tp3m: Tp3m | None, corpus: Corpus, latent: bool = True
) -> dict[tuple[str, int], np.ndarray]:
    """Trait estimate for each transition key (dialogue id, step).

    latent=False substitutes a zero vector, keeping engine input shapes
    constant so the ablation isolates information content.
    """
    out = {}
    for d in corpus.dialogues:
        n_states = sum(1 for t in d.turns if t.role == ROLE_EE)
        if latent:
            if tp3m is None:
                raise ConfigError("latent trait estimates requested without a model")
            ests = dialogue_trait_estimates(tp3m, d)
        else:
            ests = [np.zeros(5)] * n_states
        for t in range(max(0, n_states - 1)):
            out[(d.id, t)] = ests[t]
    return out


def graph_checksum(graph: CausalGraph) -> str:
    return hashlib.sha256(graph.to_json().encode("utf-8")).hexdigest()[:16]


def plan_actions(
    corpus: Corpus,
    graph: CausalGraph | None,
    ee_clf: StrategyClassifier,
    n_databases: int,
    seed: int,
    actions: str = "causal",
    index: TfidfIndex | None = None,
) -> dict[tuple[int, str, int], Turn]:
    """Counterfactual action choice for every (database, dialogue, step).

    The plan depends only on the factual corpus, the graph, and the RNG
    streams, so engine/latent variants can share it.
    """
    if actions not in ("causal", "random"):
        raise ConfigError(f"unknown action mode {actions!r}")
    if actions == "causal" and graph is None:
        raise ConfigError("causal action selection needs a graph")
    if index is None:
        index = build_index(corpus)
    plan: dict[tuple[int, str, int], Turn] = {}
    for d in corpus.dialogues:
        ee_turns = [t for t in d.turns if t.role == ROLE_EE]
        for state_no, turn in enumerate(ee_turns[:-1]):
            ee_strategy = predict_strategy(ee_clf, turn.embedding)
            for i in range(n_databases):
                stream = derive_seed(seed, "db", i, d.id, state_no)
                if actions == "causal":
                    effect = select_effect_strategy(graph, ee_strategy, index, turn.text, stream)
                    action = pick_counterfactual_action(index, effect, ee_strategy, stream)
                else:
                    action = random_action_baseline(index, stream)
                plan[(i, d.id, state_no)] = action
    return plan


def build_database(
    corpus: Corpus,
    engine_kind: str,
    engine,
    graph: CausalGraph | None,
    tp3m: Tp3m | None,
    ee_clf: StrategyClassifier,
    n_databases: int,
    seed: int,
    actions: str = "causal",
    latent: bool = True,
    index: TfidfIndex | None = None,
    plan: dict | None = None,
) -> list[CfDatabase]:
    """N independent counterfactual passes over the corpus (Fig.-style
    alternative worlds); databases differ only in their RNG streams.

    Every step classifies the factual persuadee state, retrieves an
    alternative persuader action, estimates traits from the factual pair,
    and asks the engine for the revised next state.
    """
    if engine_kind not in ("scm", "kqr"):
        raise ConfigError(f"unknown engine {engine_kind!r}")
    if actions not in ("causal", "random"):
        raise ConfigError(f"unknown action mode {actions!r}")
    if actions == "causal" and graph is None:
        raise ConfigError("causal action selection needs a graph")
    if index is None:
        index = build_index(corpus)
    if plan is None:
        plan = plan_actions(corpus, graph, ee_clf, n_databases, seed, actions, index)
    traits = transition_traits(tp3m, corpus, latent=latent)
    # abduction is per factual transition: compute once, reuse across databases
    abducted = {}
    for tr in to_transitions(corpus):
        key = (tr.dialogue_id, tr.t)
        if engine_kind == "kqr":
            abducted[key] = kqr_tau(engine, tr.s, tr.a, traits[key], tr.s_next)
        else:
            abducted[key] = tr.s_next - engine.predict(tr.s, tr.a, traits[key])
    prov = {
        "engine": engine_kind,
        "actions": actions,
        "latent": latent,
        "seed": seed,
        "graph_checksum": None if graph is None else graph_checksum(graph),
    }
    databases = []
    for i in range(n_databases):
        dialogues = []
        for d in corpus.dialogues:
            dialogues.append(
                _counterfactual_dialogue(d, i, engine_kind, engine, traits, abducted, plan)
            )
        databases.append(CfDatabase(index=i, dialogues=dialogues, provenance=dict(prov)))
    return databases


def _counterfactual_dialogue(
    d: Dialogue,
    db_index: int,
    engine_kind: str,
    engine,
    traits: dict,
    abducted: dict,
    plan: dict,
) -> Dialogue:
    turns: list[Turn] = []
    state_no = -1  # index of the most recent persuadee state
    cf_state: np.ndarray | None = None
    factual_state: np.ndarray | None = None
    for turn in d.turns:
        if turn.role == ROLE_EE:
            state_no += 1
            if state_no == 0 or cf_state is None:
                emb, source = turn.embedding, "factual"
            else:
                emb, source = cf_state, SOURCE_CF_STATE
            factual_state = turn.embedding
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_EE,
                    text=turn.text,
                    embedding=emb,
                    strategy=turn.strategy,
                    source=source,
                )
            )
            continue
        key = (d.id, state_no)
        if state_no < 0 or key not in traits or (db_index, d.id, state_no) not in plan:
            # no transition window here (leading or trailing persuader turn):
            # keep the factual turn so lengths match the source dialogue
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_ER,
                    text=turn.text,
                    embedding=turn.embedding,
                    strategy=turn.strategy,
                )
            )
            continue
        s_t = factual_state  # engines condition on the factual state
        action = plan[(db_index, d.id, state_no)]
        turns.append(
            Turn(
                index=len(turns),
                role=ROLE_ER,
                text=action.text,
                embedding=action.embedding,
                strategy=action.strategy,
                source=SOURCE_CF_ACTION,
            )
        )
        trait = traits[key]
        if engine_kind == "scm":
            cf_state = counterfactual_scm(engine, s_t, action.embedding, trait, abducted[key])
        else:
            cf_state = kqr_counterfactual(engine, s_t, action.embedding, trait, abducted[key])
    return Dialogue(
        id=f"{d.id}/cf{db_index}",
        turns=turns,
        donation_ee=0.0,
        ocean=d.ocean,
        counterfactual=True,
    )


def save_database(db: CfDatabase, corpus: Corpus, path) -> None:
    from .corpus import save_corpus

    out = Corpus(corpus.embedding_dim, corpus.ee_vocab, corpus.er_vocab, db.dialogues)
    save_corpus(out, path, header_extra={"provenance": {**db.provenance, "index": db.index}})
