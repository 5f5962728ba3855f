"""Gibbs distributions over the neurons of a layer.

A layer with N neurons is treated as a discrete random variable T taking
values in {0..N-1}. Given an input row, P(T=n | x) is proportional to
exp(t_n), where t_n is the neuron's post-activation output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OUTPUT = "output"
ROW_SUM_TOL = 1e-9


@dataclass
class CondDistTable:
    """Row-stochastic J x N matrix; row j is P(T = n | x_j)."""

    probs: np.ndarray
    layer_id: int | str = 1

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[1] < 1 or self.probs.shape[0] < 1:
            raise ValueError(f"table must be J x N with J, N >= 1, got {self.probs.shape}")
        if np.any(self.probs < 0) or np.any(self.probs > 1) or not np.all(np.isfinite(self.probs)):
            raise ValueError("table entries must be probabilities")
        if np.max(np.abs(self.probs.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("table rows must sum to 1")

    @property
    def num_samples(self) -> int:
        return self.probs.shape[0]

    @property
    def num_outcomes(self) -> int:
        return self.probs.shape[1]

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row"] + [f"p{n}" for n in range(self.num_outcomes)])
            for j, row in enumerate(self.probs):
                writer.writerow([j] + [repr(float(p)) for p in row])


@dataclass
class DistVector:
    probs: np.ndarray
    role: str = "marginal"
    class_id: int | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or np.any(self.probs < 0):
            raise ValueError("distribution must be a nonnegative vector")
        if abs(self.probs.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("distribution must sum to 1")


def exp_normalize(activations: np.ndarray) -> np.ndarray:
    z = activations - activations.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def layer_conditional(activations, layer_kind: str = "hidden", layer_id=None) -> CondDistTable:
    """Build P(T | x) for every row of a layer's outputs.

    Hidden layers get the Gibbs distribution of their post-ReLU activations.
    The output layer already is a softmax, so its probabilities are only
    renormalized.
    """
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] < 1:
        raise ValueError(f"activations must be J x N with N >= 1, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite activations")
    if layer_kind == "hidden":
        return CondDistTable(exp_normalize(a), 1 if layer_id is None else layer_id)
    if layer_kind == "output":
        if np.any(a < 0):
            raise ValueError("output probabilities must be nonnegative")
        return CondDistTable(
            a / a.sum(axis=1, keepdims=True), OUTPUT if layer_id is None else layer_id
        )
    raise ValueError(f"layer_kind must be 'hidden' or 'output', got {layer_kind!r}")


def marginal(cond: CondDistTable) -> DistVector:
    """P(T = n) with every training sample weighted 1/J."""
    return DistVector(cond.probs.mean(axis=0), "marginal")


def class_conditional(cond: CondDistTable, labels, num_classes: int):
    """Return ``(conditionals, priors)``.

    ``conditionals[y]`` is the mean of the rows labelled ``y`` and
    ``priors[y] = N(y) / J``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (cond.num_samples,):
        raise ValueError("need exactly one label per table row")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        raise ValueError(f"classes {np.flatnonzero(counts == 0).tolist()} are empty")
    conditionals = [
        DistVector(cond.probs[labels == y].mean(axis=0), "class-conditional", y)
        for y in range(num_classes)
    ]
    return conditionals, counts / labels.size


def tables_from_trace(trace) -> list[CondDistTable]:
    """One table per hidden layer (ids 1..I) followed by the output table."""
    tables = [layer_conditional(h, "hidden", i + 1) for i, h in enumerate(trace.hidden)]
    tables.append(layer_conditional(trace.probs, "output", OUTPUT))
    return tables
