"""SGD / Adam, the e warm-up schedule, and the mini-batch training loop."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .losses import Base, LossSpec, loss_batch
from .model import LinearModel, MlpModel, predict, project_to_ball


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    optimizer: str = "sgd"
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    total_epochs: int = 20
    warmup_fraction: float = 0.1
    seed: int = 0
    projection_radius: float | None = None
    hidden: tuple[int, ...] = ()
    bias: bool = True

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.total_epochs < 1:
            raise ValueError("batch_size and total_epochs must be positive")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must lie in [0, 1)")
        self.hidden = tuple(self.hidden)

    @property
    def warmup_epochs(self) -> int:
        return math.floor(self.warmup_fraction * self.total_epochs)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float | None
    effective_e: float
    wall_clock_s: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainResult:
    epochs: list[EpochMetrics]
    model: LinearModel | MlpModel
    initial_model: LinearModel | MlpModel

    @property
    def effective_e_trace(self) -> list[float]:
        return [m.effective_e for m in self.epochs]

    @property
    def final_test_acc(self) -> float:
        return self.epochs[-1].test_acc

    @property
    def final_train_acc(self) -> float:
        return self.epochs[-1].train_acc


def effective_e(epoch: int, cfg: TrainConfig) -> float:
    if not (0 <= epoch < cfg.total_epochs):
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    if epoch < cfg.warmup_epochs:
        return 1.0
    return cfg.loss.transform.e


def sgd_step(params, grads, state, lr):
    """In-place ``p -= lr * g``; ``state`` is unused and passed through."""
    for p, g in zip(params, grads):
        p -= lr * g
    return params, state


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   0, beta1, beta2, eps)


def adam_step(params, grads, state: AdamState, lr):
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def build_model(cfg: TrainConfig, d: int, n_classes: int):
    binary = cfg.loss.base is not Base.SOFTMAX
    if binary and not cfg.hidden:
        return LinearModel.init(d, bias=cfg.bias, seed=cfg.seed)
    out = 1 if binary else n_classes
    return MlpModel.init((d, *cfg.hidden, out), seed=cfg.seed)


def _labels_for(spec: LossSpec, ds: Dataset) -> Dataset:
    if spec.base is Base.SOFTMAX:
        return ds.as_index_labels()
    if not ds.binary:
        raise ValueError(f"{spec.base.value} loss needs binary +-1 labels")
    return ds


def accuracy(model, ds: Dataset) -> float:
    return float(np.mean(predict(model, ds.features) == ds.labels))


def _batch_grads(model, X, y, spec):
    if isinstance(model, MlpModel):
        scores, acts = model.forward_cached(X)
        values, upstream = loss_batch(spec, scores, y)
        grads = model.backward(X, upstream / len(y), acts=acts)
    else:
        scores = model.forward(X)
        values, upstream = loss_batch(spec, scores, y)
        grads = model.backward(X, upstream / len(y))
    return float(np.mean(values)), grads


def train(cfg: TrainConfig, train: Dataset, test: Dataset | None = None, model=None,
          on_epoch=None) -> TrainResult:
    """Minimize the mean transformed loss by mini-batch SGD or Adam.

    Every epoch draws a fresh permutation from a generator seeded with
    ``(seed, epoch)``. The loss exponent follows :func:`effective_e`.
    ``on_epoch`` is called with each :class:`EpochMetrics` as it completes.
    """
    if train.n == 0:
        raise ValueError("empty training set")
    train = _labels_for(cfg.loss, train)
    test = _labels_for(cfg.loss, test) if test is not None else None
    if model is None:
        model = build_model(cfg, train.d, train.n_classes)
    if model.n_inputs != train.d:
        raise ValueError(f"model expects {model.n_inputs} features, data has {train.d}")
    initial = model.copy()
    params = model.params
    state = AdamState.zeros_like(params, cfg.beta1, cfg.beta2, cfg.adam_eps) if cfg.optimizer == "adam" else None
    step = adam_step if cfg.optimizer == "adam" else sgd_step
    project = cfg.projection_radius is not None and isinstance(model, LinearModel)

    history = []
    X, y = train.features, train.labels
    for epoch in range(cfg.total_epochs):
        t0 = time.perf_counter()
        e = effective_e(epoch, cfg)
        spec = cfg.loss.with_e(e)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(train.n)
        for b, start in enumerate(range(0, train.n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            value, grads = _batch_grads(model, X[idx], y[idx], spec)
            if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch}, batch {b} (loss={value})")
            step(params, grads, state, cfg.lr)
            if project:
                model.w[:] = project_to_ball(model, cfg.projection_radius).w
        values, _ = loss_batch(spec, model.forward(X), y)
        train_loss = float(np.mean(values))
        if not math.isfinite(train_loss):
            raise TrainingDiverged(f"non-finite training loss after epoch {epoch}")
        m = EpochMetrics(
            epoch=epoch,
            train_loss=train_loss,
            train_acc=accuracy(model, train),
            test_acc=accuracy(model, test) if test is not None else None,
            effective_e=e,
            wall_clock_s=time.perf_counter() - t0,
        )
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
    return TrainResult(history, model, initial)
