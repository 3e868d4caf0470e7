"""Synthetic ground-truth world: known strategy DAG, linear-Gaussian state
dynamics, OCEAN-dependent behavior, and exact oracles.

The world is built so every downstream claim is checkable without real data:

- persuadee (EE) strategy labels are a linear readout of the state, so a
  softmax classifier can recover them;
- persuader (ER) strategies follow a known bipartite EE->ER edge set with
  mixing noise, so causal discovery has a ground truth;
- states evolve as s' = A s + B a + C L + eps, with the trait arm C L only
  cleanly separable when the previous action is known (B feeds into the same
  subspace), which is exactly the contract of the trait estimator;
- donations are a known linear map of edge-match counts and traits, clipped,
  so expected values under the donation noise have a closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .corpus import (
    ROLE_EE,
    ROLE_ER,
    Corpus,
    Dialogue,
    OceanVector,
    StrategyVocab,
    Turn,
    derive_seed,
)
from .errors import ConfigError, DataError


def default_edges(n_ee: int = 6, n_er: int = 8) -> tuple[tuple[int, int], ...]:
    """Bipartite edge set: disjoint cause groups with disjoint children.

    Each effect has two parents (colliders make the directions identifiable)
    and each cause group's children are exclusive to it, so the effect counts
    only reveal group totals and the within-group cause composition stays
    private.  Overlapping parent sets would let the effects jointly pin down
    every cause count, and a likelihood score then prefers the anti-causal
    factorization.
    """
    if (n_ee, n_er) != (6, 8):
        # generic fallback: pair causes (2k, 2k+1) and split effects among pairs
        groups = [(2 * g, 2 * g + 1) for g in range((n_ee + 1) // 2)]
        out = []
        for j in range(n_er):
            for p in groups[j % len(groups)]:
                if p < n_ee:
                    out.append((p, j))
        return tuple(sorted(set(out)))
    parents = {
        0: (0, 1),
        1: (0, 1),
        2: (2, 3),
        3: (2, 3),
        4: (4, 5),
        5: (4, 5),
    }
    # er-s6 and er-s7 stay parentless: filler strategies used only through
    # the non-causal mixing channel
    return tuple(sorted((p, j) for j, ps in parents.items() for p in ps))


@dataclass(frozen=True)
class WorldSpec:
    n_ee_strategies: int = 6
    n_er_strategies: int = 8
    embedding_dim: int = 16
    # mean exchanges per dialogue (Poisson, floored at 2); generous lengths
    # keep per-strategy counts dense enough that edges show up over the
    # per-turn choice noise
    dialogue_length: int = 12
    true_edges: tuple[tuple[int, int], ...] | None = None
    noise_sigma: float = 0.05
    strategy_signal: float = 1.0  # scale of the per-turn exogenous strategy arm
    # exogenous noise inside the label-readout subspace: lets the counted
    # strategy label diverge from the intent that drove the response, which
    # gives every cause column private variance (otherwise effect counts plus
    # sibling counts reconstruct each cause count and a likelihood score
    # prefers the anti-causal factorization)
    label_noise: float = 0.7
    action_scale: float = 1.0
    state_feedback: float = 0.15  # spectral scale of A
    action_effect: float = 0.45  # spectral scale of B
    trait_effect: float = 0.8  # column scale of C
    action_trait_alignment: float = 0.75  # share of B's energy inside span(C)
    # mean P(ER turn follows a true edge); the per-dialogue rate is drawn
    # uniformly from +- attention_spread around it, so match rates vary
    # across dialogues and the reward model has signal to learn the value of
    # well-aimed responses
    causal_mixing: float = 0.8
    attention_spread: float = 0.2
    # responsive (persuadable) users were factually underserved: attention
    # drops with responsiveness.  A latent-blind next-state model therefore
    # learns the effect of a well-aimed response mostly from unresponsive
    # users and underestimates it for the responsive ones; trait-aware
    # engines do not inherit that selection bias.
    attention_resp_slope: float = 0.25
    # leading/trailing persuader turns vary the EE/ER turn-count difference
    # across dialogues; without them the per-dialogue counts obey an exact
    # accounting identity that score-based search would model as a dense hub
    leading_er_prob: float = 0.5
    trailing_er_prob: float = 0.5
    # per-dialogue strategy-preference strength: every cause strategy needs
    # its own strong exogenous variance source (a trait, or the context
    # latent below) that effects can only see through the cause itself;
    # that asymmetry is what makes the edge directions recoverable from
    # per-dialogue counts
    ocean_loading: float = 1.2
    context_loading: float = 1.2  # latent tilt for strategies without a trait
    # after a matched exchange, the next intent shifts toward the receptive
    # strategies (one per cause group) in proportion to the persuadee's
    # responsiveness (agreeable-minus-neurotic); this is the part of the
    # exogenous dynamics that only trait-aware counterfactual engines can
    # track, and what gives the latent ablation its bite
    receptive_shift: float = 1.0
    donation_base: float = 5.0
    donation_match: float = 0.2  # value of a matched exchange, ordinary strategy
    donation_match_receptive: float = 0.5  # value when the strategy is receptive
    donation_ocean: tuple[float, ...] = (0.4, 0.3, 0.3, 0.8, -2.4)
    donation_noise: float = 0.5
    seed: int = 0

    def edges(self) -> tuple[tuple[int, int], ...]:
        if self.true_edges is not None:
            return tuple(tuple(e) for e in self.true_edges)
        return default_edges(self.n_ee_strategies, self.n_er_strategies)

    def validate(self) -> "WorldSpec":
        if self.n_ee_strategies < 2 or self.n_er_strategies < 2:
            raise ConfigError("need at least 2 strategies per role")
        if self.embedding_dim < self.n_ee_strategies + 5:
            raise ConfigError("embedding_dim too small for disjoint strategy/trait subspaces")
        if self.dialogue_length < 2:
            raise ConfigError("dialogue_length must be at least 2 exchanges")
        if len(self.donation_ocean) != 5:
            raise ConfigError("donation_ocean needs 5 weights")
        for cause, effect in self.edges():
            if not (0 <= cause < self.n_ee_strategies and 0 <= effect < self.n_er_strategies):
                raise ConfigError(f"edge ({cause}, {effect}) out of range")
        children = {k: [] for k in range(self.n_ee_strategies)}
        for cause, effect in self.edges():
            children[cause].append(effect)
        if any(not ch for ch in children.values()):
            raise ConfigError("every EE strategy needs at least one child edge")
        return self

    def to_json(self) -> str:
        d = asdict(self)
        d["true_edges"] = [list(e) for e in self.edges()]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WorldSpec":
        d = json.loads(text)
        if d.get("true_edges") is not None:
            d["true_edges"] = tuple(tuple(e) for e in d["true_edges"])
        if d.get("donation_ocean") is not None:
            d["donation_ocean"] = tuple(d["donation_ocean"])
        return cls(**d).validate()


class World:
    """Materialized world: all maps are deterministic functions of the spec."""

    def __init__(self, spec: WorldSpec):
        spec.validate()
        self.spec = spec
        d = spec.embedding_dim
        kee, ker = spec.n_ee_strategies, spec.n_er_strategies
        rng = np.random.default_rng(derive_seed(spec.seed, "world-maps"))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        self.U = q[:, :kee]  # EE strategy subspace (readout + intent lift)
        self.C = spec.trait_effect * q[:, kee : kee + 5]  # trait subspace
        c_dirs = q[:, kee : kee + 5]
        qv, _ = np.linalg.qr(rng.standard_normal((d, d)))
        self.V = qv[:, :ker]  # ER action lift
        # dynamics must not write into the strategy-readout subspace U:
        # otherwise past actions would tilt future strategy labels and the
        # strategy-count matrix would carry real effect->cause channels
        p_u = self.U @ self.U.T
        off_u = np.eye(d) - p_u
        qa, _ = np.linalg.qr(rng.standard_normal((d, d)))
        a_raw = off_u @ qa
        self.A = spec.state_feedback * a_raw / (np.linalg.norm(a_raw) / math.sqrt(d))
        raw_b = off_u @ rng.standard_normal((d, d))
        p_c = c_dirs @ c_dirs.T
        in_c = p_c @ raw_b
        out_c = raw_b - in_c
        in_c /= np.linalg.norm(in_c) / math.sqrt(d)
        out_c /= np.linalg.norm(out_c) / math.sqrt(d)
        al = spec.action_trait_alignment
        mix = math.sqrt(al) * in_c + math.sqrt(1.0 - al) * out_c
        self.B = spec.action_effect * mix / (np.linalg.norm(mix) / math.sqrt(d))
        # EE strategies 0-4 load on one trait each; extras carry no loading so
        # no two strategies respond to the same trait (keeps their usage
        # counts near-independent, which is what identifies edge directions)
        self.ocean_loadings = np.zeros((kee, 5))
        for k in range(min(kee, 5)):
            self.ocean_loadings[k, k] = spec.ocean_loading
        self.children = {k: [] for k in range(kee)}
        for cause, effect in spec.edges():
            self.children[cause].append(effect)
        for k in self.children:
            self.children[k] = sorted(self.children[k])
        self.edge_set = set(spec.edges())
        # receptive strategies: one member of each cause group (the even
        # indices); matched exchanges pull later intents toward these for
        # responsive persuadees, and their matches are worth more
        self.receptive = np.array([1.0 if k % 2 == 0 else 0.0 for k in range(kee)])
        self.responsiveness_w = np.array([0.0, 0.0, 0.0, 1.0, -1.0]) / math.sqrt(2.0)
        self.ee_vocab = StrategyVocab(ROLE_EE, tuple(f"ee-s{k}" for k in range(kee)))
        self.er_vocab = StrategyVocab(ROLE_ER, tuple(f"er-s{k}" for k in range(ker)))

    def readout_ee(self, s: np.ndarray) -> int:
        return int(np.argmax(self.U.T @ s))

    def step_mean(self, s: np.ndarray, a: np.ndarray, l_norm: np.ndarray) -> np.ndarray:
        return self.A @ s + self.B @ a + self.C @ l_norm

    def match_value(self, ee_strategy_index: int) -> float:
        if ee_strategy_index % 2 == 0:
            return self.spec.donation_match_receptive
        return self.spec.donation_match

    def responsiveness(self, l_norm: np.ndarray) -> float:
        return float(self.responsiveness_w @ l_norm)

    def donation_mean(self, total_match_value: float, l_norm: np.ndarray) -> float:
        w = np.asarray(self.spec.donation_ocean)
        return self.spec.donation_base + total_match_value + float(w @ l_norm)


def ocean_to_latent(ocean_raw: np.ndarray) -> np.ndarray:
    """Map inventory-scale [1,5] traits to the centered SCM input."""
    return (np.asarray(ocean_raw, dtype=float) - 3.0) / 2.0


@dataclass
class GroundTruth:
    spec: WorldSpec
    optimal_policy_value: float
    cpdag: dict
    # exact exogenous noise per transition, keyed (dialogue_id, step); lets
    # tests replay the structural map bit-for-bit
    noise_log: dict = field(default_factory=dict)
    match_counts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "spec": json.loads(self.spec.to_json()),
                "optimal_policy_value": self.optimal_policy_value,
                "cpdag": self.cpdag,
            },
            sort_keys=True,
        )


def _cpdag_encoding(spec: WorldSpec) -> dict:
    """Equivalence-class encoding: an edge is compelled when its effect has
    another parent not adjacent to the cause (here: any second parent)."""
    edges = spec.edges()
    parents = {}
    for cause, effect in edges:
        parents.setdefault(effect, []).append(cause)
    directed, undirected = [], []
    for cause, effect in edges:
        if len(parents[effect]) >= 2:
            directed.append([f"ee-s{cause}", f"er-s{effect}"])
        else:
            undirected.append([f"ee-s{cause}", f"er-s{effect}"])
    return {"directed": sorted(directed), "undirected": sorted(undirected)}


def _expected_clipped_gaussian(mu: float, sigma: float, lo: float = 0.0, hi: float = 10.0) -> float:
    """E[clip(X, lo, hi)] for X ~ N(mu, sigma^2), in closed form."""
    if sigma == 0:
        return float(min(max(mu, lo), hi))
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    Phi = lambda z: 0.5 * (1.0 + math.erf(z / math.sqrt(2)))
    mid = mu * (Phi(b) - Phi(a)) - sigma * (phi(b) - phi(a))
    return float(lo * Phi(a) + mid + hi * (1.0 - Phi(b)))


def generate(spec: WorldSpec, m: int) -> tuple[Corpus, GroundTruth]:
    """Sample m dialogues; returns the corpus and the exact ground truth.

    Dialogue j's randomness comes from its own derived seed, so generation
    order (or a parallel schedule) cannot change the output.
    """
    if m < 10:
        raise DataError(f"need m >= 10 dialogues, got {m}")
    world = World(spec)
    d = spec.embedding_dim
    kee, ker = spec.n_ee_strategies, spec.n_er_strategies
    dialogues = []
    noise_log = {}
    match_counts = {}
    opt_values = []
    for j in range(m):
        rng = np.random.default_rng(derive_seed(spec.seed, "dialogue", j))
        did = f"syn-{j:05d}"
        ocean_raw = rng.uniform(1.0, 5.0, size=5)
        l_norm = ocean_to_latent(ocean_raw)
        n_ex = max(2, int(rng.poisson(spec.dialogue_length)))
        logits = world.ocean_loadings @ l_norm
        context = rng.standard_normal()
        for k in range(min(5, kee), kee):
            logits[k] += spec.context_loading * context
        resp = world.responsiveness(l_norm)
        lo = max(0.0, spec.causal_mixing - spec.attention_spread)
        hi = min(1.0, spec.causal_mixing + spec.attention_spread)
        attention = float(np.clip(
            rng.uniform(lo, hi) - spec.attention_resp_slope * resp, 0.05, 1.0
        ))

        def draw_intent(shift: float) -> int:
            z = logits + shift * world.receptive
            p = np.exp(z - z.max())
            p /= p.sum()
            return int(rng.choice(kee, p=p))

        def exo_noise():
            return spec.noise_sigma * rng.standard_normal(d) + spec.label_noise * (
                world.U @ rng.standard_normal(kee)
            )

        intent = draw_intent(0.0)
        s = world.C @ l_norm + spec.strategy_signal * world.U[:, intent] + exo_noise()
        turns = []
        match_value = 0.0
        if rng.uniform() < spec.leading_er_prob:
            er_label = int(rng.integers(ker))
            turns.append(
                Turn(
                    index=0,
                    role=ROLE_ER,
                    text=f"ER[{world.er_vocab.names[er_label]}] dlg {j} opener",
                    embedding=spec.action_scale * world.V[:, er_label]
                    + spec.noise_sigma * rng.standard_normal(d),
                    strategy=world.er_vocab.names[er_label],
                )
            )
        for t in range(n_ex):
            ee_label = world.readout_ee(s)
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_EE,
                    text=f"EE[{world.ee_vocab.names[ee_label]}] dlg {j} turn {t}",
                    embedding=s,
                    strategy=world.ee_vocab.names[ee_label],
                )
            )
            # the response attends to the intent behind the state, not to the
            # readout label (which may diverge through readout noise)
            if rng.uniform() < attention:
                er_label = int(rng.choice(world.children[intent]))
            else:
                er_label = int(rng.integers(ker))
            if (ee_label, er_label) in world.edge_set:
                match_value += world.match_value(ee_label)
            a = spec.action_scale * world.V[:, er_label] + spec.noise_sigma * rng.standard_normal(d)
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_ER,
                    text=f"ER[{world.er_vocab.names[er_label]}] dlg {j} turn {t}",
                    embedding=a,
                    strategy=world.er_vocab.names[er_label],
                )
            )
            attended = (intent, er_label) in world.edge_set
            shift = spec.receptive_shift * resp if attended else 0.0
            intent = draw_intent(shift)
            eps = spec.strategy_signal * world.U[:, intent] + exo_noise()
            noise_log[(did, t)] = eps
            s = world.step_mean(s, a, l_norm) + eps
        ee_label = world.readout_ee(s)
        turns.append(
            Turn(
                index=len(turns),
                role=ROLE_EE,
                text=f"EE[{world.ee_vocab.names[ee_label]}] dlg {j} turn {n_ex}",
                embedding=s,
                strategy=world.ee_vocab.names[ee_label],
            )
        )
        if rng.uniform() < spec.trailing_er_prob:
            er_label = int(rng.integers(ker))
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_ER,
                    text=f"ER[{world.er_vocab.names[er_label]}] dlg {j} closer",
                    embedding=spec.action_scale * world.V[:, er_label]
                    + spec.noise_sigma * rng.standard_normal(d),
                    strategy=world.er_vocab.names[er_label],
                )
            )
        raw = world.donation_mean(match_value, l_norm) + spec.donation_noise * rng.standard_normal()
        donation = float(min(max(raw, 0.0), 10.0))
        match_counts[did] = match_value
        dialogues.append(
            Dialogue(
                id=did,
                turns=turns,
                donation_ee=donation,
                ocean=OceanVector.from_array(ocean_raw),
            )
        )
        # best achievable: every exchange matched at its label's match value
        ee_labels = [t.strategy for t in turns if t.role == ROLE_EE]
        best = sum(world.match_value(world.ee_vocab.index(lab)) for lab in ee_labels[:-1])
        opt_values.append(
            _expected_clipped_gaussian(world.donation_mean(best, l_norm), spec.donation_noise)
        )
    corpus = Corpus(
        embedding_dim=d,
        ee_vocab=world.ee_vocab,
        er_vocab=world.er_vocab,
        dialogues=dialogues,
    )
    truth = GroundTruth(
        spec=spec,
        optimal_policy_value=float(np.mean(opt_values)),
        cpdag=_cpdag_encoding(spec),
        noise_log=noise_log,
        match_counts=match_counts,
    )
    return corpus, truth


def oracle_counterfactual(spec: WorldSpec, s, a, eps, a_prime, l_norm) -> np.ndarray:
    """Closed-form counterfactual next state: A s + B a' + C l + eps.

    `eps` is the realized exogenous term of the factual transition (from the
    generation noise log); the factual action `a` is accepted for interface
    symmetry and is irrelevant once eps is known.
    """
    world = World(spec)
    s = np.asarray(s, dtype=float)
    a_prime = np.asarray(a_prime, dtype=float)
    eps = np.asarray(eps, dtype=float)
    l_norm = np.asarray(l_norm, dtype=float)
    d = spec.embedding_dim
    for name, v, exp in (("s", s, d), ("a_prime", a_prime, d), ("eps", eps, d), ("l", l_norm, 5)):
        if v.shape != (exp,):
            raise DataError(f"{name} has shape {v.shape}, expected ({exp},)")
    return world.step_mean(s, a_prime, l_norm) + eps


def oracle_optimal_value(truth: GroundTruth, corpus: Corpus) -> float:
    """Exact optimal expected clipped donation, averaged over dialogues.

    The donation is additive over per-exchange edge matches, so the optimum
    over ER-strategy sequences separates per step: at each realized EE
    strategy, enumerate the action set and keep the best.  The donation noise
    is integrated analytically (Gaussian-clip closed form), so the value is
    exact, not sampled.
    """
    spec = truth.spec
    world = World(spec)
    n_steps = sum(
        sum(1 for t in dlg.turns if t.role == ROLE_EE) - 1 for dlg in corpus.dialogues
    )
    if n_steps * spec.n_er_strategies > 10**6:
        raise DataError(
            f"enumeration budget exceeded: {n_steps * spec.n_er_strategies} > 1e6"
        )
    values = []
    for dlg in corpus.dialogues:
        if dlg.ocean is None:
            raise DataError(f"dialogue {dlg.id!r} lacks OCEAN ground truth")
        l_norm = ocean_to_latent(dlg.ocean.to_array())
        best = 0.0
        ee_turns = [t for t in dlg.turns if t.role == ROLE_EE]
        for turn in ee_turns[:-1]:
            ee_idx = world.ee_vocab.index(turn.strategy)
            best += max(
                world.match_value(ee_idx) if (ee_idx, er) in world.edge_set else 0.0
                for er in range(spec.n_er_strategies)
            )
        values.append(
            _expected_clipped_gaussian(world.donation_mean(best, l_norm), spec.donation_noise)
        )
    return float(np.mean(values))


def save_truth(truth: GroundTruth, path) -> None:
    Path(path).write_text(truth.to_json() + "\n", encoding="utf-8")
