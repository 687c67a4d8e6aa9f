"""Small numpy MLPs, the AdamW optimiser and a generic mini-batch training loop."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .core import argmax_predict, check_probs

CHECKPOINT_FORMAT = "idealdefer.mlp"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass
class MlpParams:
    """Weights ``W[i]`` of shape (fan_in, fan_out) and biases ``b[i]``; ReLU between layers."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match weights {W.shape}")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i}: input size {W.shape[0]} does not match previous output")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def arrays(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self):
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta):
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(theta[pos:pos + a.size], dtype=float).reshape(a.shape))
            pos += a.size
        return MlpParams(arrays[0::2], arrays[1::2])


def init_mlp(sizes: Sequence[int], rng) -> MlpParams:
    """Uniform fan-in initialisation ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, inputs):
    """Affine layers with ReLU in between; 1-D input gives 1-D output."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"expected {params.weights[0].shape[0]} inputs, got {h.shape[1]}")
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def _forward_cache(params, X):
    acts = [X]
    pre = []
    h = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return acts, pre


def _backward(params, acts, pre, grad_out):
    gW = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    g = grad_out
    for i in range(len(params.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i:
            g = (g @ params.weights[i].T) * (pre[i - 1] > 0)
    return gW, gb


def loss_and_grad(params: MlpParams, X, objective):
    """Evaluate ``objective(outputs) -> (loss, dloss/doutputs)`` and backpropagate.

    Returns the loss and the gradient as an ``MlpParams`` of the same shapes.
    """
    acts, pre = _forward_cache(params, X)
    out = acts[-1]
    loss, g_out = objective(out[:, 0] if out.shape[1] == 1 else out)
    g_out = np.asarray(g_out, dtype=float).reshape(out.shape)
    gW, gb = _backward(params, acts, pre, g_out)
    return loss, _grads(gW, gb)


def _grads(gW, gb):
    g = object.__new__(MlpParams)
    g.weights, g.biases = gW, gb
    return g


def min_abs_preactivation(params: MlpParams, X):
    """Distance of the hidden pre-activations from the ReLU kink."""
    _, pre = _forward_cache(params, np.asarray(X, dtype=float))
    hidden = pre[:-1]
    return min((float(np.abs(z).min()) for z in hidden), default=np.inf)


# objectives: map network outputs to (mean loss, gradient w.r.t. outputs)

def cross_entropy_objective(logits, y):
    n = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    loss = -float(logp[np.arange(n), y].mean())
    grad = softmax(logits, axis=1)
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


def squared_objective(u, target):
    r = u - target
    return float(np.mean(r ** 2)), 2.0 * r / u.shape[0]


@dataclass
class OptimizerConfig:
    """AdamW settings shared by every trained network."""

    learning_rate: float = 7e-4
    weight_decay: float = 1e-3
    epochs: int = 300
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("learning_rate", "weight_decay", "epochs", "batch_size", "beta1", "beta2", "eps")}


class AdamW:
    """Adam with decoupled weight decay, applied in place to a list of arrays."""

    def __init__(self, arrays, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            a -= c.learning_rate * ((m / bc1) / (np.sqrt(v / bc2) + c.eps) + c.weight_decay * a)


def train_mlp(params: MlpParams, X, batch_objective: Callable, n, cfg: OptimizerConfig, rng):
    """Mini-batch AdamW training.

    ``batch_objective(outputs, index)`` returns the mean loss over the rows
    ``index`` and its gradient with respect to ``outputs``. Returns the
    trained parameters and the per-epoch mean loss.
    """
    rng = np.random.default_rng(rng)
    params = params.copy()
    arrays = params.arrays()
    opt = AdamW(arrays, cfg)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, g = loss_and_grad(params, X[idx], lambda out: batch_objective(out, idx))
            if not np.isfinite(loss):
                raise TrainingDivergedError("training loss became non-finite")
            total += loss * len(idx)
            opt.step(arrays, g.arrays())
        history.append(total / n)
    return params, history


def deferral_features(model_probs):
    """Entropy, the top ``min(10, L)`` probabilities (descending) and the argmax one-hot.

    Output dimension is ``L + min(10, L) + 1``.
    """
    p = check_probs(model_probs)
    single = p.ndim == 1
    p = p[None, :] if single else p
    n, L = p.shape
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=1)
    top = -np.sort(-p, axis=1)[:, : min(10, L)]
    onehot = np.zeros((n, L))
    onehot[np.arange(n), argmax_predict(p)] = 1.0
    out = np.hstack([ent[:, None], top, onehot])
    return out[0] if single else out


def feature_dim(num_classes):
    return num_classes + min(10, num_classes) + 1


def _encode(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s, shape):
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(float)


def params_to_json(params: MlpParams, meta=None) -> dict:
    """Versioned checkpoint: layer shapes and base64 little-endian float64 arrays."""
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activation": "relu",
        "layers": [{"shape": list(W.shape), "weight": _encode(W), "bias": _encode(b)}
                   for W, b in zip(params.weights, params.biases)],
        "meta": meta or {},
    }


def params_from_json(doc: dict):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not an MLP checkpoint: format={doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    weights, biases = [], []
    for layer in doc["layers"]:
        shape = tuple(layer["shape"])
        weights.append(_decode(layer["weight"], shape))
        biases.append(_decode(layer["bias"], (shape[1],)))
    return MlpParams(weights, biases), doc.get("meta", {})


def save_checkpoint(params: MlpParams, path, meta=None):
    with open(path, "w") as fh:
        json.dump(params_to_json(params, meta), fh, indent=1, sort_keys=True)


def load_checkpoint(path):
    with open(path) as fh:
        return params_from_json(json.load(fh))
