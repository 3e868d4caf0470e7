"""Shared numeric substrate.

Small feedforward networks with hand-derived gradients, the losses used
across the pipeline, a first-order trainer, PCA/CCA, and regression metrics.
Everything is float64: the test suite leans on finite-difference gradient
checks and analytic oracles that need the headroom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ConfigError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    # relu subgradient at exactly 0 is 0 by convention
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "identity":
        return np.ones_like(z)
    raise ConfigError(f"unknown activation {name!r}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    optimizer: str = "adam"
    l2_penalty: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


class FeedForwardNet:
    """Fully connected net; layer l maps sizes[l] -> sizes[l+1] then activates."""

    def __init__(self, sizes, activations, seed: int = 0):
        sizes = list(sizes)
        activations = list(activations)
        if len(sizes) < 2:
            raise ConfigError("need at least input and output sizes")
        if len(activations) != len(sizes) - 1:
            raise ConfigError("one activation per layer required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = activations
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise DataError(f"input width {x.shape[1]} != expected {self.sizes[0]}")
        pre = []
        post = [x]
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            pre.append(z)
            h = _act(act, z)
            post.append(h)
        if not np.all(np.isfinite(h)):
            raise NumericError("non-finite activations in forward pass")
        return h, (pre, post)

    def backward(self, cache, grad_out: np.ndarray):
        """Exact gradients of the forward map.

        Returns (param_grads, grad_input); param_grads matches parameters()
        ordering (W0, b0, W1, b1, ...).
        """
        pre, post = cache
        grad = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads = [None] * (2 * self.n_layers)
        for l in range(self.n_layers - 1, -1, -1):
            dz = grad * _act_grad(self.activations[l], pre[l])
            grads[2 * l] = post[l].T @ dz
            grads[2 * l + 1] = dz.sum(axis=0)
            grad = dz @ self.weights[l].T
        return grads, grad

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "activations": self.activations,
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedForwardNet":
        net = cls(d["sizes"], d["activations"], seed=d.get("seed", 0))
        net.weights = [np.asarray(w, dtype=float) for w in d["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        return net

    def save(self, path, extra: dict | None = None) -> None:
        obj = self.to_dict()
        if extra:
            obj["meta"] = extra
        Path(path).write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FeedForwardNet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(kind: str, params, lr):
    if kind == "adam":
        return _Adam(params, lr)
    if kind == "sgd":
        return _Sgd(params, lr)
    raise ConfigError(f"unknown optimizer {kind!r}")


def squared_loss(y_hat: np.ndarray, y: np.ndarray):
    """Mean over samples of half squared error summed over output dims."""
    y_hat = np.atleast_2d(y_hat)
    y = np.atleast_2d(y)
    n = y_hat.shape[0]
    diff = y_hat - y
    loss = 0.5 * float(np.sum(diff * diff)) / n
    return loss, diff / n


def pinball_loss(y_hat, y, tau: float):
    """Quantile (pinball) loss: tau*max(y-y_hat,0) + (1-tau)*max(y_hat-y,0)."""
    if not (0.0 < tau < 1.0):
        raise ConfigError(f"tau must be in (0, 1), got {tau}")
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = y - y_hat
    loss = float(np.mean(tau * np.maximum(diff, 0.0) + (1 - tau) * np.maximum(-diff, 0.0)))
    grad = np.where(diff > 0, -tau, np.where(diff < 0, 1 - tau, 0.0)) / y.size
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over integer labels; gradient w.r.t. logits."""
    probs = softmax(logits)
    n = probs.shape[0]
    labels = np.asarray(labels, dtype=int)
    eps = 1e-300
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + eps)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train_net(net: FeedForwardNet, X, Y, loss_fn, config: TrainConfig):
    """Minibatch training; returns per-epoch mean losses.

    Batch gradients are plain single-threaded numpy sums, so the summation
    order is fixed and results are reproducible bit-for-bit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y)
    if Y.ndim == 1 and Y.dtype.kind == "f":
        Y = Y.reshape(-1, 1)
    n = X.shape[0]
    params = list(net.parameters())
    opt = make_optimizer(config.optimizer, params, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            out, cache = net.forward_cached(X[idx])
            loss, grad_out = loss_fn(out, Y[idx])
            grads, _ = net.backward(cache, grad_out)
            if config.l2_penalty > 0:
                for p, g in zip(params, grads):
                    if p.ndim == 2:  # weights only, biases unpenalized
                        g += config.l2_penalty * p
                        loss += 0.5 * config.l2_penalty * float(np.sum(p * p))
            opt.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        history.append(epoch_loss / max(n_batches, 1))
    return history


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d, p) rows are principal directions
    explained_ratio: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return Z @ self.components + self.mean


def pca(X: np.ndarray, d: int) -> PcaModel:
    """Top-d principal components with a deterministic sign convention.

    Each component's largest-magnitude coordinate is made positive.  If d
    exceeds the rank, missing components are zero rows (zero variance).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    if d > p:
        raise DataError(f"d={d} exceeds number of columns {p}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, svals, vt = np.linalg.svd(Xc, full_matrices=False)
    var = svals**2
    total = float(var.sum())
    rank = int(np.sum(svals > svals[0] * 1e-12)) if svals.size and svals[0] > 0 else 0
    comps = np.zeros((d, p))
    ratios = np.zeros(d)
    k = min(d, rank)
    comps[:k] = vt[:k]
    ratios[:k] = var[:k] / total if total > 0 else 0.0
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return PcaModel(mean=mean, components=comps, explained_ratio=ratios)


def _inv_sqrt_psd(C: np.ndarray, reg: float) -> np.ndarray:
    C = C + reg * np.eye(C.shape[0])
    evals, evecs = np.linalg.eigh(C)
    evals = np.maximum(evals, reg)
    return evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T


def cca(X: np.ndarray, Y: np.ndarray, k: int, reg: float = 1e-8):
    """Canonical correlations via whitening plus SVD of the cross-covariance.

    Returns (correlations descending, (Wx, Wy)) where columns of Wx/Wy project
    centered X/Y onto the canonical variates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, p = X.shape
    n2, q = Y.shape
    if n != n2:
        raise DataError("X and Y need equal sample counts")
    if n <= p + q:
        raise DataError(f"need n > p + q for CCA, got n={n}, p={p}, q={q}")
    if k > min(p, q):
        raise DataError(f"k={k} exceeds min(p, q)={min(p, q)}")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    Cxx = Xc.T @ Xc / (n - 1)
    Cyy = Yc.T @ Yc / (n - 1)
    Cxy = Xc.T @ Yc / (n - 1)
    wx = _inv_sqrt_psd(Cxx, reg)
    wy = _inv_sqrt_psd(Cyy, reg)
    u, svals, vt = np.linalg.svd(wx @ Cxy @ wy)
    corrs = np.clip(svals[:k], 0.0, 1.0)
    Wx = wx @ u[:, :k]
    Wy = wy @ vt[:k].T
    return corrs, (Wx, Wy)


def regression_metrics(y_hat, y) -> dict:
    """MSE / RMSE / MAPE / R^2 / MAE with the usual definitions.

    MAPE skips zero targets and reports how many were skipped; R^2 is NaN
    when the targets are constant.
    """
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y_hat.shape != y.shape or y.size < 2:
        raise DataError("regression_metrics needs equal-length inputs of size >= 2")
    err = y_hat - y
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    nonzero = y != 0
    skipped = int(np.sum(~nonzero))
    if np.any(nonzero):
        mape = float(np.mean(np.abs(err[nonzero] / y[nonzero])))
    else:
        mape = float("nan")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(err**2))
    r2 = float("nan") if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return {
        "mse": mse,
        "rmse": float(np.sqrt(mse)),
        "mape": mape,
        "mape_skipped": skipped,
        "r2": r2,
        "mae": mae,
    }
