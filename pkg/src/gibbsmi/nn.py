"""Dense ReLU MLP with softmax output, manual backprop and Adam.

Everything runs in float64. Weight matrices are stored fan_in x fan_out so
a batch propagates as ``t @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"GMW1"
PROB_FLOOR = 1e-12


class DivergedTrainingError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: fan_in {w.shape[0]} does not chain")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_hidden(self) -> int:
        return len(self.weights) - 1

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class ForwardTrace:
    hidden: list[np.ndarray]  # post-ReLU, batch x N_i
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class AdamState:
    lr: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int | None = None  # None or >= J means full batch
    lr: float = 0.03
    seed: int = 0


def init_mlp(layer_sizes: Sequence[int], seed: int) -> MlpParams:
    """He-uniform weights (variance 2/fan_in), zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise ValueError("need input, at least one hidden layer and an output layer")
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def zero_mlp(layer_sizes: Sequence[int]) -> MlpParams:
    sizes = list(layer_sizes)
    return MlpParams(
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: MlpParams, batch: np.ndarray) -> ForwardTrace:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.layer_sizes[0]:
        raise ValueError(
            f"batch of shape {batch.shape} does not match input width {params.layer_sizes[0]}"
        )
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite input")
    hidden = []
    t = batch
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        t = np.maximum(t @ w + b, 0.0)
        hidden.append(t)
    logits = t @ params.weights[-1] + params.biases[-1]
    return ForwardTrace(hidden, logits, softmax(logits))


def _check_labels(labels, num_classes, batch_len):
    labels = np.asarray(labels)
    if labels.shape != (batch_len,):
        raise ValueError(f"expected {batch_len} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    return labels.astype(np.int64)


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true class, in nats."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, probs.shape[1], probs.shape[0])
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def backward(params: MlpParams, trace: ForwardTrace, batch: np.ndarray, labels) -> MlpParams:
    """Exact gradients of the mean cross-entropy, shaped like ``params``."""
    batch = np.asarray(batch, dtype=np.float64)
    n = batch.shape[0]
    if trace.probs.shape[0] != n or len(trace.hidden) != params.num_hidden:
        raise ValueError("trace does not belong to this batch/network")
    labels = _check_labels(labels, trace.probs.shape[1], n)

    delta = trace.probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    inputs = [batch] + trace.hidden
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i].T) * (trace.hidden[i - 1] > 0)
    return MlpParams(grad_w, grad_b)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update. Returns new params; ``state`` is advanced in place."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if [a.shape for a in p_arrays] != [g.shape for g in g_arrays]:
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise ValueError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in p_arrays]
        state.v = [np.zeros_like(p) for p in p_arrays]
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    updated = []
    with np.errstate(over="ignore", invalid="ignore"):
        for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            updated.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return MlpParams(updated[0::2], updated[1::2]), state


Observer = Callable[[int, MlpParams], None]


def train(
    params: MlpParams,
    train_set,
    config: TrainConfig,
    observer: Observer | None = None,
) -> tuple[MlpParams, list[float]]:
    """Adam on mean cross-entropy.

    ``train_set`` is a :class:`~gibbsmi.dataset.Dataset`. The observer is
    called after every epoch with ``(epoch, params)`` where ``epoch`` counts
    from 1; the params it receives are not touched again by training.
    Returns the final params and the mean minibatch loss of every epoch.
    """
    x, y = train_set.data, train_set.labels
    if x.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"dataset width {x.shape[1]} != network input {params.layer_sizes[0]}")
    if train_set.num_classes != params.layer_sizes[-1]:
        raise ValueError("number of classes does not match the output layer")
    n = x.shape[0]
    batch = n if config.batch_size is None else min(config.batch_size, n)
    rng = np.random.default_rng(config.seed)
    state = AdamState(lr=config.lr)
    losses = []
    for epoch in range(1, config.epochs + 1):
        order = np.arange(n) if batch == n else rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            xb, yb = x[idx], y[idx]
            trace = forward(params, xb)
            loss = cross_entropy(trace.probs, yb)
            if not np.isfinite(loss):
                raise DivergedTrainingError(epoch, loss)
            try:
                params, state = adam_step(params, backward(params, trace, xb, yb), state)
            except ValueError as err:
                raise DivergedTrainingError(epoch, loss) from err
            total += loss * len(idx)
        if not params.is_finite():
            raise DivergedTrainingError(epoch, float("nan"))
        losses.append(total / n)
        if observer is not None:
            observer(epoch, params)
    return params, losses


def predict(params: MlpParams, data: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(forward(params, data).probs, axis=1)


def accuracy(params: MlpParams, dataset) -> float:
    return float(np.mean(predict(params, dataset.data) == dataset.labels))


# --- checkpoints ----------------------------------------------------------


def save_checkpoint(params: MlpParams, path) -> None:
    """Header "GMW1", layer count, sizes (little-endian u32); then W_i, b_i as float64."""
    sizes = params.layer_sizes
    out = [CHECKPOINT_MAGIC, struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)]
    for w, b in zip(params.weights, params.biases):
        out.append(w.astype("<f8").tobytes(order="C"))
        out.append(b.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> MlpParams:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a GMW1 checkpoint")
    (count,) = struct.unpack("<I", raw[4:8])
    sizes = struct.unpack(f"<{count}I", raw[8 : 8 + 4 * count])
    offset = 8 + 4 * count
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        nw = fan_in * fan_out * 8
        w = np.frombuffer(raw[offset : offset + nw], dtype="<f8")
        offset += nw
        b = np.frombuffer(raw[offset : offset + fan_out * 8], dtype="<f8")
        offset += fan_out * 8
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ValueError(f"{path}: truncated checkpoint")
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return MlpParams(weights, biases)
