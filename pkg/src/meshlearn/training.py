"""Optimizers and the training loop.

Everything is deterministic given the seed: dataset order, shuffling,
parameter init and gradient reduction order are all fixed. Meshes within
a batch may be processed by a thread pool; per-mesh gradients are summed
in batch-index order afterwards, so the thread count never changes the
result.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .core import Mesh, normalize_mesh


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adam"   # "adam" or "sgd"
    weight_decay: float = 0.0
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


class SGDMomentum:
    """v <- mu v - lr g;  p <- p + v."""

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: net.ModelParams, grads: net.ModelParams) -> None:
        for (name, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
            if p.size == 0:
                continue
            g = g + self.weight_decay * p
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v - self.lr * g
            self.velocity[name] = v
            p += v


class Adam:
    """First/second-moment recursion with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: net.ModelParams, grads: net.ModelParams) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for (name, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
            if p.size == 0:
                continue
            g = g + self.weight_decay * p
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGDMomentum(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, weight_decay=cfg.weight_decay)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


def optimizer_step(params: net.ModelParams, grads: net.ModelParams,
                   cfg: TrainConfig, state=None):
    """Single functional-style update; returns (params, state)."""
    if state is None:
        state = make_optimizer(cfg)
    state.step(params, grads)
    return params, state


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float
    seconds: float
    stalls: int = 0

    def line(self) -> str:
        return (f"epoch={self.epoch} loss={self.loss:.6f} "
                f"train_acc={self.train_acc:.4f} test_acc={self.test_acc:.4f}"
                + (f" stalls={self.stalls}" if self.stalls else ""))


@dataclass
class TrainResult:
    params: net.ModelParams
    metrics: list[EpochMetrics]
    best_params: net.ModelParams
    best_test_acc: float
    best_epoch: int


def _prepare(samples, config: net.ModelConfig):
    """Normalize meshes and cache their parameter-independent inputs."""
    out = []
    for mesh, label in samples:
        m = normalize_mesh(mesh)
        out.append((m, label, net.precompute_static(m, config)))
    return out


def _forward_backward(item, params, config):
    mesh, label, static = item
    logits, tape = net.model_forward(mesh, params, config, static=static)
    loss, grad_logits = net.cross_entropy_loss(logits, label)
    grads = net.model_backward(tape, params, config, grad_logits)
    stalled = any(bt.pool is not None and bt.pool.stalled for bt in tape.blocks)
    return loss, int(np.argmax(logits) == label), grads, stalled


def _predict(item, params, config):
    mesh, label, static = item
    logits, _ = net.model_forward(mesh, params, config, static=static)
    return int(np.argmax(logits) == label)


def evaluate(prepared, params, config, threads: int = 1):
    if not prepared:
        raise ValueError("empty evaluation split")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            hits = list(ex.map(lambda it: _predict(it, params, config), prepared))
    else:
        hits = [_predict(it, params, config) for it in prepared]
    return float(np.mean(hits))


def train(train_samples, test_samples, model_config: net.ModelConfig,
          train_config: TrainConfig, progress=None,
          stop_at_test_acc: float | None = None) -> TrainResult:
    """Train the classifier; deterministic given the seeds.

    ``train_samples``/``test_samples`` are lists of (Mesh, label). Emits
    per-epoch metrics and keeps the parameters with the best test
    accuracy. ``stop_at_test_acc`` ends training early once reached.
    """
    if not train_samples:
        raise ValueError("empty training split")
    labels = [l for _, l in train_samples] + [l for _, l in test_samples]
    if any(l < 0 or l >= model_config.num_classes for l in labels):
        raise ValueError("label out of range for configured class count")
    rng = np.random.default_rng(train_config.seed)
    params = net.init_params(model_config, np.random.default_rng(model_config.seed))
    opt = make_optimizer(train_config)
    tr = _prepare(train_samples, model_config)
    te = _prepare(test_samples, model_config)

    metrics: list[EpochMetrics] = []
    best_acc, best_epoch = -1.0, -1
    best_params = _copy_params(params)
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(tr))
        losses, hits, stalls = [], [], 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [tr[i] for i in order[start:start + train_config.batch_size]]
            if train_config.threads > 1:
                with ThreadPoolExecutor(max_workers=train_config.threads) as ex:
                    results = list(ex.map(
                        lambda it: _forward_backward(it, params, model_config), batch))
            else:
                results = [_forward_backward(it, params, model_config) for it in batch]
            acc_grads = net.zeros_like_params(params)
            for loss, hit, grads, stalled in results:  # fixed reduction order
                net.add_params(acc_grads, grads, scale=1.0 / len(batch))
                losses.append(loss)
                hits.append(hit)
                stalls += int(stalled)
            opt.step(params, acc_grads)
        test_acc = evaluate(te, params, model_config, train_config.threads) if te else 0.0
        em = EpochMetrics(epoch=epoch, loss=float(np.mean(losses)),
                          train_acc=float(np.mean(hits)), test_acc=test_acc,
                          seconds=time.perf_counter() - t0, stalls=stalls)
        metrics.append(em)
        if progress is not None:
            progress(em)
        if test_acc > best_acc:
            best_acc, best_epoch = test_acc, epoch
            best_params = _copy_params(params)
        if stop_at_test_acc is not None and test_acc >= stop_at_test_acc:
            break
    return TrainResult(params=params, metrics=metrics, best_params=best_params,
                       best_test_acc=best_acc, best_epoch=best_epoch)


def _copy_params(params: net.ModelParams) -> net.ModelParams:
    import copy
    return copy.deepcopy(params)
