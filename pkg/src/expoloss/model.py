"""Linear and fully connected ReLU classifiers with manual backpropagation.

Both model types expose a flat ``params`` list of arrays so the optimizers can
treat them uniformly. Inputs are row batches ``X`` of shape (N, d); a single
feature vector is promoted to a batch of one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _as_batch(features, d: int) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected {d} input features, got shape {np.shape(features)}")
    return X


@dataclass
class LinearModel:
    """Score ``w . phi(x)``; with ``bias`` a constant 1 feature is appended."""

    w: np.ndarray
    bias: bool = False

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)

    @classmethod
    def init(cls, d: int, bias: bool = False, seed: int = 0) -> "LinearModel":
        rng = np.random.default_rng(seed)
        n = d + int(bias)
        return cls(glorot_uniform(rng, n, 1, n), bias)

    @property
    def n_inputs(self) -> int:
        return self.w.size - int(self.bias)

    @property
    def n_outputs(self) -> int:
        return 1

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w]

    def copy(self) -> "LinearModel":
        return LinearModel(self.w.copy(), self.bias)

    def _phi(self, X: np.ndarray) -> np.ndarray:
        if self.bias:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def forward(self, features) -> np.ndarray:
        X = _as_batch(features, self.n_inputs)
        return self._phi(X) @ self.w

    def backward(self, features, upstream) -> list[np.ndarray]:
        X = _as_batch(features, self.n_inputs)
        g = np.asarray(upstream, dtype=float).reshape(-1)
        if g.shape[0] != X.shape[0]:
            raise ValueError(f"upstream gradient has {g.shape[0]} rows, batch has {X.shape[0]}")
        return [self._phi(X).T @ g]

    def to_dict(self) -> dict:
        return {"kind": "linear", "bias": self.bias,
                "shapes": [list(self.w.shape)], "params": [self.w.tolist()]}


@dataclass
class MlpModel:
    """Affine layers with ReLU between them; no activation on the output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[1] != b.size:
                raise ValueError(f"layer {i}: weight {W.shape} does not match bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i} input {W.shape[0]} != previous output {self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, sizes, seed: int = 0) -> "MlpModel":
        """``sizes`` is (d, hidden..., out); weights Glorot-uniform, biases zero."""
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(seed)
        Ws = [glorot_uniform(rng, a, b, (a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        bs = [np.zeros(b) for b in sizes[1:]]
        return cls(Ws, bs)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def _run(self, X: np.ndarray):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def forward(self, features) -> np.ndarray:
        X = _as_batch(features, self.n_inputs)
        out = self._run(X)[-1]
        return out[:, 0] if self.n_outputs == 1 else out

    def backward(self, features, upstream, acts=None) -> list[np.ndarray]:
        """Gradients of ``sum_i upstream_i . scores_i`` for every parameter.

        ``acts`` may carry the activations of a previous forward pass over the
        same batch (see :meth:`forward_cached`); otherwise they are recomputed.
        """
        X = _as_batch(features, self.n_inputs)
        if acts is None:
            acts = self._run(X)
        g = np.asarray(upstream, dtype=float).reshape(X.shape[0], -1)
        if g.shape[1] != self.n_outputs:
            raise ValueError(f"upstream gradient has {g.shape[1]} columns, model has {self.n_outputs} outputs")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i].T) * (acts[i] > 0.0)
        return grads

    def forward_cached(self, features):
        X = _as_batch(features, self.n_inputs)
        acts = self._run(X)
        out = acts[-1]
        return (out[:, 0] if self.n_outputs == 1 else out), acts

    def to_dict(self) -> dict:
        ps = self.params
        return {"kind": "mlp", "shapes": [list(p.shape) for p in ps],
                "params": [p.reshape(-1).tolist() for p in ps]}


def forward(model, features) -> np.ndarray:
    return model.forward(features)


def backward(model, features, upstream) -> list[np.ndarray]:
    return model.backward(features, upstream)


def predict(model, features) -> np.ndarray:
    """Binary models: sign of the score with sign(0) = +1. Otherwise argmax.

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    scores = model.forward(features)
    if scores.ndim == 1:
        return np.where(scores >= 0.0, 1, -1)
    return np.argmax(scores, axis=1)


def project_to_ball(model: LinearModel, M: float) -> LinearModel:
    if M <= 0:
        raise ValueError("radius must be positive")
    norm = np.linalg.norm(model.w)
    # rescaling lands within a few ulps of M; accept that as inside
    if norm <= M * (1.0 + 8.0 * np.finfo(float).eps):
        return model.copy()
    return LinearModel(model.w * (M / norm), model.bias)


def save_checkpoint(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def model_from_dict(doc: dict):
    arrays = [np.asarray(p, dtype=float).reshape(s) for s, p in zip(doc["shapes"], doc["params"])]
    if doc["kind"] == "linear":
        return LinearModel(arrays[0], bool(doc["bias"]))
    if doc["kind"] == "mlp":
        return MlpModel(arrays[0::2], arrays[1::2])
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def load_checkpoint(path):
    return model_from_dict(json.loads(Path(path).read_text()))
