"""Feed-forward ReLU network with a two-way softmax, trained by Adam.

Everything is float64 numpy. The first layer accepts CSR input so the
text-only configuration (thousands of n-gram columns) stays cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class MLPNet:
    weights: list  # W_l with shape (fan_in, fan_out)
    biases: list
    weight_decay: float = 1e-6

    @classmethod
    def init(cls, n_in, hidden=(128, 128, 128, 128), n_out=2, weight_decay=1e-6, rng=None) -> "MLPNet":
        rng = np.random.default_rng(rng)
        sizes = [n_in, *hidden, n_out]
        W, b = [], []
        for a, c in zip(sizes[:-1], sizes[1:]):
            W.append(rng.standard_normal((a, c)) * math.sqrt(2.0 / max(a, 1)))  # He
            b.append(np.zeros(c))
        return cls(W, b, weight_decay)

    @classmethod
    def zeros(cls, n_in, hidden=(128, 128, 128, 128), n_out=2, weight_decay=1e-6) -> "MLPNet":
        sizes = [n_in, *hidden, n_out]
        return cls([np.zeros((a, c)) for a, c in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(c) for c in sizes[1:]], weight_decay)

    def params(self) -> list:
        return [*self.weights, *self.biases]

    def copy(self) -> "MLPNet":
        return MLPNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.weight_decay)

    # -- forward / backward -------------------------------------------------
    def _forward(self, X):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def proba(self, X) -> np.ndarray:
        logits = self._forward(X)[-1]
        return softmax(logits)

    def loss(self, X, y) -> float:
        """Mean cross-entropy plus the L2 penalty (0.5 * wd * sum W^2)."""
        logits = self._forward(X)[-1]
        lse = np.logaddexp(logits[:, 0], logits[:, 1])
        ce = float(np.mean(lse - logits[np.arange(len(y)), y]))
        return ce + 0.5 * self.weight_decay * sum(float(np.sum(W * W)) for W in self.weights)

    def grads(self, X, y):
        acts = self._forward(X)
        n = len(y)
        delta = softmax(acts[-1])
        delta[np.arange(n), y] -= 1.0
        delta /= n
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a = acts[i]
            gW[i] = np.asarray(a.T @ delta) + self.weight_decay * self.weights[i]
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return gW, gb


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MLPHistory:
    train_loss: list = field(default_factory=list)
    holdout_loss: list = field(default_factory=list)
    best_epoch: int = 0


def fit_mlp(Z, y, *, hidden=(128, 128, 128, 128), learning_rate=3e-4, weight_decay=1e-6,
            max_epochs=500, patience=20, batch_size=256, holdout=None, seed=0,
            beta1=0.9, beta2=0.999, eps=1e-8):
    """Adam on mini-batches; returns (best network, history).

    ``holdout`` is an optional (fit rows, holdout rows) pair. Early stopping
    restores the weights of the epoch with the lowest holdout loss; without a
    holdout the training loss is watched instead.
    """
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    if holdout is None:
        fit_idx, hold_idx = np.arange(len(y)), None
    else:
        fit_idx, hold_idx = holdout
    Zf, yf = Z[fit_idx], y[fit_idx]
    Zh, yh = (Z[hold_idx], y[hold_idx]) if hold_idx is not None else (None, None)
    net = MLPNet.init(Z.shape[1], hidden, 2, weight_decay, rng)
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    hist = MLPHistory()
    best, best_net, since = np.inf, net.copy(), 0
    n = len(yf)
    for epoch in range(max_epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            bi = order[s:s + batch_size]
            gW, gb = net.grads(Zf[bi], yf[bi])
            step += 1
            c1 = 1.0 - beta1 ** step
            c2 = 1.0 - beta2 ** step
            for j, (p, g) in enumerate(zip(params, [*gW, *gb])):
                m[j] *= beta1
                m[j] += (1 - beta1) * g
                v[j] *= beta2
                v[j] += (1 - beta2) * g * g
                p -= learning_rate * (m[j] / c1) / (np.sqrt(v[j] / c2) + eps)
        tl = net.loss(Zf, yf)
        hist.train_loss.append(tl)
        cur = tl
        if Zh is not None:
            cur = net.loss(Zh, yh)
            hist.holdout_loss.append(cur)
        if cur < best:
            best, best_net, since = cur, net.copy(), 0
            hist.best_epoch = epoch + 1
        else:
            since += 1
            if since >= patience:
                break
    return best_net, hist


def gradient_check(net: MLPNet, X, y, epsilon=1e-5, floor=1e-6) -> float:
    """Max relative error between backprop and central finite differences.

    error = |a - n| / max(|a| + |n|, floor). A central difference cannot
    resolve less than one ulp of the loss over 2 * epsilon (~2e-11 for a loss
    near 1), so gradients below ``floor`` are compared on an absolute scale
    instead of a ratio of roundoff. Evaluate at a point whose pre-activations
    are all farther than the step from 0: a ReLU kink inside the stencil makes
    the two sides disagree for a correct gradient.
    """
    if not 1e-6 <= epsilon <= 1e-4:
        raise ValueError("epsilon must lie in [1e-6, 1e-4]")
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) > 16:
        raise ValueError("gradient check is meant for at most 16 samples")
    gW, gb = net.grads(X, y)
    worst = 0.0
    for p, g in zip(net.params(), [*gW, *gb]):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = net.loss(X, y)
            flat[i] = old - epsilon
            down = net.loss(X, y)
            flat[i] = old
            num = (up - down) / (2 * epsilon)
            err = abs(gflat[i] - num) / max(abs(gflat[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst
