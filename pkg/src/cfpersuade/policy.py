"""Offline dueling double Q-learning over counterfactual databases.

Q(s, a) = V(s) + A(s, a) - mean_b A(s, b), the mean running over the
candidate action set at that position (the databases' actions plus the
factual one).  Targets are double-DQN: the online network picks the argmax
at the next state, the target network values it.  Training is plain
minibatch MSE over the fixed replay set; there is no exploration because
the data regime is a static database, not an environment.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ROLE_EE, ROLE_ER, Corpus, Dialogue, Turn, derive_seed
from .errors import ConfigError, DataError
from .numcore import FeedForwardNet, make_optimizer
from .reward import CumulativeRewardSeries, DdpModel, predict_donation


@dataclass
class PolicyConfig:
    gamma: float = 0.9
    batch_size: int = 60
    learning_rate: float = 1e-3
    target_sync: int = 100
    updates: int = 2000
    seed: int = 0
    hidden: int = 256

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError("gamma must be in [0, 1)")
        if self.batch_size <= 0 or self.updates <= 0 or self.target_sync <= 0:
            raise ConfigError("batch_size, updates, target_sync must be positive")


class DuelingQNet:
    """Trunk on the state; a value head and an action-conditioned advantage head."""

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 256, seed: int = 0):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = hidden
        self.trunk = FeedForwardNet([state_dim, hidden], ["relu"], seed=derive_seed(seed, "trunk") % 2**32)
        self.v_head = FeedForwardNet([hidden, 1], ["identity"], seed=derive_seed(seed, "v") % 2**32)
        self.a_head = FeedForwardNet(
            [hidden + action_dim, hidden, 1],
            ["relu", "identity"],
            seed=derive_seed(seed, "a") % 2**32,
        )

    def parameters(self):
        yield from self.trunk.parameters()
        yield from self.v_head.parameters()
        yield from self.a_head.parameters()

    def clone(self) -> "DuelingQNet":
        other = DuelingQNet(self.state_dim, self.action_dim, self.hidden)
        other.trunk = copy.deepcopy(self.trunk)
        other.v_head = copy.deepcopy(self.v_head)
        other.a_head = copy.deepcopy(self.a_head)
        return other

    def copy_from(self, other: "DuelingQNet") -> None:
        for mine, theirs in (
            (self.trunk, other.trunk),
            (self.v_head, other.v_head),
            (self.a_head, other.a_head),
        ):
            mine.weights = [w.copy() for w in theirs.weights]
            mine.biases = [b.copy() for b in theirs.biases]

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "hidden": self.hidden,
            "trunk": self.trunk.to_dict(),
            "v_head": self.v_head.to_dict(),
            "a_head": self.a_head.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DuelingQNet":
        net = cls(d["state_dim"], d["action_dim"], d["hidden"])
        net.trunk = FeedForwardNet.from_dict(d["trunk"])
        net.v_head = FeedForwardNet.from_dict(d["v_head"])
        net.a_head = FeedForwardNet.from_dict(d["a_head"])
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DuelingQNet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def q_values(net: DuelingQNet, s: np.ndarray, actions) -> np.ndarray:
    """Q for each candidate action via the dueling identity."""
    actions = [np.asarray(a, dtype=float) for a in actions]
    if not actions:
        raise DataError("candidate action set is empty")
    h = net.trunk.forward(np.asarray(s, dtype=float).reshape(1, -1))
    v = float(net.v_head.forward(h)[0, 0])
    rows = np.stack([np.concatenate([h[0], a]) for a in actions])
    adv = net.a_head.forward(rows)[:, 0]
    return v + adv - adv.mean()


@dataclass
class ReplayItem:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray | None
    cur_candidates: np.ndarray  # m x action_dim, includes the taken action's set
    next_candidates: np.ndarray | None
    taken: int  # row of the taken action within cur_candidates
    terminal: bool


def _dialogue_windows(d: Dialogue):
    """(state turn, action turn, next state turn) triples of one dialogue."""
    out = []
    for i in range(len(d.turns) - 2):
        a, b, c = d.turns[i], d.turns[i + 1], d.turns[i + 2]
        if a.role == ROLE_EE and b.role == ROLE_ER and c.role == ROLE_EE:
            out.append((a, b, c))
    return out


def build_replay(databases, corpus: Corpus, ddp: DdpModel) -> list[ReplayItem]:
    """All transitions across the databases, rewarded by terminal DDP predictions.

    Candidate sets at (dialogue, step) pool the databases' actions in database
    order plus the factual action last.
    """
    if not databases:
        raise DataError("no databases to train on")
    n_dlg = len(corpus.dialogues)
    for db in databases:
        if len(db.dialogues) != n_dlg:
            raise DataError("database/corpus dialogue counts differ")
    cands: dict[tuple[int, int], np.ndarray] = {}
    windows_by_db = [[_dialogue_windows(d) for d in db.dialogues] for db in databases]
    factual_windows = [_dialogue_windows(d) for d in corpus.dialogues]
    for j in range(n_dlg):
        for t in range(len(factual_windows[j])):
            pool = [w[j][t][1].embedding for w in windows_by_db if t < len(w[j])]
            pool.append(factual_windows[j][t][1].embedding)
            cands[(j, t)] = np.stack(pool)
    replay: list[ReplayItem] = []
    for i, db in enumerate(databases):
        for j, d in enumerate(db.dialogues):
            windows = windows_by_db[i][j]
            if not windows:
                continue
            donation = predict_donation(ddp, d)
            for t, (st, at, nx) in enumerate(windows):
                terminal = t == len(windows) - 1
                replay.append(
                    ReplayItem(
                        s=st.embedding,
                        a=at.embedding,
                        r=donation if terminal else 0.0,
                        s_next=None if terminal else nx.embedding,
                        cur_candidates=cands[(j, t)],
                        next_candidates=None if terminal else cands[(j, t + 1)],
                        taken=i,
                        terminal=terminal,
                    )
                )
    return replay


def _batch_q_sets(net: DuelingQNet, states, cand_sets) -> list[np.ndarray]:
    """Q vectors for many (state, candidate set) pairs in one pass."""
    H = net.trunk.forward(np.stack(states))
    V = net.v_head.forward(H)[:, 0]
    rows = []
    for i, cs in enumerate(cand_sets):
        for k in range(cs.shape[0]):
            rows.append(np.concatenate([H[i], cs[k]]))
    A = net.a_head.forward(np.stack(rows))[:, 0]
    out = []
    pos = 0
    for i, cs in enumerate(cand_sets):
        m = cs.shape[0]
        a = A[pos : pos + m]
        pos += m
        out.append(V[i] + a - a.mean())
    return out


def _batch_q(net: DuelingQNet, items):
    """Q values of the taken actions for a batch, plus the caches needed to
    backpropagate through the dueling aggregation."""
    S = np.stack([it.s for it in items])
    H, trunk_cache = net.trunk.forward_cached(S)
    V, v_cache = net.v_head.forward_cached(H)
    rows = []
    owner = []
    taken_rows = []
    for i, it in enumerate(items):
        base = len(rows)
        for k in range(it.cur_candidates.shape[0]):
            rows.append(np.concatenate([H[i], it.cur_candidates[k]]))
            owner.append(i)
        taken_rows.append(base + it.taken)
    A, a_cache = net.a_head.forward_cached(np.stack(rows))
    A = A[:, 0]
    owner = np.asarray(owner)
    m = np.asarray([it.cur_candidates.shape[0] for it in items], dtype=float)
    a_mean = np.zeros(len(items))
    np.add.at(a_mean, owner, A)
    a_mean /= m
    q = V[:, 0] + A[np.asarray(taken_rows)] - a_mean
    return q, (trunk_cache, v_cache, a_cache, owner, np.asarray(taken_rows), m, len(items))


def _apply_q_gradient(net: DuelingQNet, caches, dq: np.ndarray, opt, params):
    trunk_cache, v_cache, a_cache, owner, taken_rows, m, n = caches
    hidden = net.hidden
    # advantage head: taken rows get dq * (1 - 1/m); other rows -dq/m
    d_rows = -(dq / m)[owner]
    d_rows[taken_rows] += dq
    a_grads, d_a_in = net.a_head.backward(a_cache, d_rows.reshape(-1, 1))
    # value head
    v_grads, d_h_v = net.v_head.backward(v_cache, dq.reshape(-1, 1))
    # trunk: value-head path plus the h-part of every advantage row
    d_h = d_h_v.copy()
    np.add.at(d_h, owner, d_a_in[:, :hidden])
    trunk_grads, _ = net.trunk.backward(trunk_cache, d_h)
    opt.step(params, trunk_grads + v_grads + a_grads)


def fit_q(net: DuelingQNet, replay: list[ReplayItem], config: PolicyConfig):
    """Minibatch MSE updates with a periodically synced target network."""
    if not replay:
        raise DataError("empty replay set")
    target = net.clone()
    params = list(net.parameters())
    opt = make_optimizer("adam", params, config.learning_rate)
    rng = np.random.default_rng(derive_seed(config.seed, "policy-batches"))
    trace = []
    for step in range(config.updates):
        idx = rng.integers(0, len(replay), size=config.batch_size)
        items = [replay[i] for i in idx]
        targets = np.empty(len(items))
        live = [i for i, it in enumerate(items) if not it.terminal]
        for i, it in enumerate(items):
            if it.terminal:
                targets[i] = it.r
        if live:
            states = [items[i].s_next for i in live]
            sets = [items[i].next_candidates for i in live]
            online = _batch_q_sets(net, states, sets)
            tq = _batch_q_sets(target, states, sets)
            for pos, i in enumerate(live):
                best = int(np.argmax(online[pos]))
                targets[i] = items[i].r + config.gamma * tq[pos][best]
        q, caches = _batch_q(net, items)
        err = q - targets
        trace.append(float(np.mean(err**2)))
        dq = 2.0 * err / len(items)
        _apply_q_gradient(net, caches, dq, opt, params)
        if (step + 1) % config.target_sync == 0:
            target.copy_from(net)
    return trace


def double_dqn_target(net: DuelingQNet, target_net: DuelingQNet, item: ReplayItem, gamma: float) -> float:
    """Exposed for unit pinning: online argmax, target value."""
    if item.terminal:
        return item.r
    online = q_values(net, item.s_next, item.next_candidates)
    best = int(np.argmax(online))
    tq = q_values(target_net, item.s_next, item.next_candidates)
    return item.r + gamma * tq[best]


def train(net: DuelingQNet, databases, corpus: Corpus, ddp: DdpModel, config: PolicyConfig):
    """Build the replay from the databases and fit; returns (net, loss trace)."""
    replay = build_replay(databases, corpus, ddp)
    trace = fit_q(net, replay, config)
    return net, trace


def rollout(net: DuelingQNet, databases, corpus: Corpus) -> list[Dialogue]:
    """Greedy argmax-Q walk: start at each factual start state, pick among the
    databases' actions, follow the chosen database's next state."""
    if not databases:
        raise DataError("no databases to roll out over")
    out = []
    windows_by_db = [[_dialogue_windows(d) for d in db.dialogues] for db in databases]
    for j, d in enumerate(corpus.dialogues):
        n_steps = min(
            (len(w[j]) for w in windows_by_db),
            default=0,
        )
        if n_steps == 0:
            continue
        s = windows_by_db[0][j][0][0].embedding  # factual start state equals db start
        turns = [
            Turn(
                index=0,
                role=ROLE_EE,
                text=windows_by_db[0][j][0][0].text,
                embedding=s,
                strategy=windows_by_db[0][j][0][0].strategy,
            )
        ]
        for t in range(n_steps):
            actions = [w[j][t][1].embedding for w in windows_by_db]
            qs = q_values(net, s, actions)
            pick = int(np.argmax(qs))  # argmax takes the lowest index on ties
            chosen = windows_by_db[pick][j][t]
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_ER,
                    text=chosen[1].text,
                    embedding=chosen[1].embedding,
                    strategy=chosen[1].strategy,
                    source=chosen[1].source,
                )
            )
            s = chosen[2].embedding
            turns.append(
                Turn(
                    index=len(turns),
                    role=ROLE_EE,
                    text=chosen[2].text,
                    embedding=s,
                    strategy=chosen[2].strategy,
                    source=chosen[2].source,
                )
            )
        out.append(
            Dialogue(
                id=f"{d.id}/dstar",
                turns=turns,
                donation_ee=0.0,
                ocean=d.ocean,
                counterfactual=True,
            )
        )
    return out


def evaluate(ddp: DdpModel, dialogues) -> CumulativeRewardSeries:
    """Per-dialogue DDP predictions turned into a cumulative reward series."""
    return CumulativeRewardSeries.from_rewards(
        predict_donation(ddp, d) for d in dialogues
    )


def evaluate_mean(ddp: DdpModel, databases) -> CumulativeRewardSeries:
    """Mean cumulative curve over N databases: average the per-position
    predictions, then prefix-sum."""
    if not databases:
        return CumulativeRewardSeries.from_rewards([])
    per_db = np.stack([
        [predict_donation(ddp, d) for d in db.dialogues] for db in databases
    ])
    return CumulativeRewardSeries.from_rewards(per_db.mean(axis=0))
