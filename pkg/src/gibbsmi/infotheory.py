"""Plug-in entropy / mutual information and the MI generalization bound.

All reported information quantities are in bits. The generalization bound
is evaluated with the mutual information expressed in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .gibbs import CondDistTable, class_conditional, marginal

LN2 = math.log(2.0)
CLAMP_TOL = 1e-9


def entropy(dist, base=2) -> float:
    """Shannon entropy with the 0 log 0 = 0 convention; ``base`` is 2 or ``"e"``."""
    p = np.asarray(getattr(dist, "probs", dist), dtype=np.float64)
    nz = p[p > 0]
    h = -float(np.sum(nz * np.log(nz)))
    if base == 2:
        return h / LN2
    if base in ("e", math.e):
        return h
    raise ValueError(f"base must be 2 or 'e', got {base!r}")


def _row_entropies(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=1) / LN2


def clamp(value: float) -> float:
    """Zero out tiny negative round-off; anything more negative is a bug."""
    if value < -CLAMP_TOL:
        raise ArithmeticError(f"mutual information estimate {value} is negative")
    return max(value, 0.0)


def mi_input(cond: CondDistTable) -> float:
    """I(X_S; T) = H(T) - H(T | X_S) with each sample weighted 1/J."""
    h_t = entropy(marginal(cond))
    h_t_given_x = float(np.mean(_row_entropies(cond.probs)))
    return h_t - h_t_given_x


def mi_label(cond: CondDistTable, labels, num_classes: int) -> float:
    """I(Y_S; T) = H(T) - sum_y P(y) H(T | Y=y)."""
    conditionals, priors = class_conditional(cond, labels, num_classes)
    h_t = entropy(marginal(cond))
    h_t_given_y = sum(float(p) * entropy(c) for p, c in zip(priors, conditionals))
    return h_t - h_t_given_y


def brute_force_mi(joint) -> float:
    """Mutual information of an explicit 2-D joint table, in bits.

    Test oracle: sums p(a,b) log p(a,b)/(p(a)p(b)) cell by cell.
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2 or np.any(joint < 0):
        raise ValueError("joint must be a nonnegative matrix")
    if abs(joint.sum() - 1.0) > 1e-9:
        raise ValueError(f"joint sums to {joint.sum()}, not 1")
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    total = 0.0
    for a in range(joint.shape[0]):
        for b in range(joint.shape[1]):
            p = joint[a, b]
            if p > 0:
                total += p * math.log2(p / (pa[a] * pb[b]))
    return total


@dataclass(frozen=True)
class BoundConfig:
    sigma: float = 1.0
    sample_count: int = 512

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


def gen_bound(i_sw_nats: float, cfg: BoundConfig) -> float:
    """sqrt(2 sigma^2 I(S;W) / J) for a sigma-subgaussian loss."""
    if i_sw_nats < 0:
        raise ValueError(f"mutual information must be nonnegative, got {i_sw_nats}")
    return math.sqrt(2.0 * cfg.sigma**2 * i_sw_nats / cfg.sample_count)


@dataclass
class Decomposition:
    i_x: list[float]  # I(X_S; T_i) per hidden layer, then the output
    i_y: list[float]
    i_xbar_t1: float
    i_y_yhat: float
    i_sw: float
    h_y: float

    @property
    def i_xbar(self) -> list[float]:
        """I(X̄_S; T_i) = I(X_S;T_i) - I(Y_S;T_i) for every layer incl. the output."""
        return [max(x - y, 0.0) for x, y in zip(self.i_x, self.i_y)]


def decompose(tables: list[CondDistTable], labels, num_classes: int) -> Decomposition:
    """Split I(S;W) into I(X̄_S;T_1) + I(Y_S;Ŷ).

    ``tables`` holds one table per hidden layer followed by the output
    table, all from one forward pass over the training set.
    """
    if len(tables) < 2:
        raise ValueError("need at least one hidden-layer table and the output table")
    i_x = [clamp(mi_input(t)) for t in tables]
    i_y = [clamp(mi_label(t, labels, num_classes)) for t in tables]
    i_xbar_t1 = clamp(i_x[0] - i_y[0])
    i_y_yhat = i_y[-1]
    counts = np.bincount(np.asarray(labels), minlength=num_classes)
    return Decomposition(
        i_x=i_x,
        i_y=i_y,
        i_xbar_t1=i_xbar_t1,
        i_y_yhat=i_y_yhat,
        i_sw=i_xbar_t1 + i_y_yhat,
        h_y=entropy(counts / counts.sum()),
    )


@dataclass
class MiEpochRecord:
    epoch: int
    loss_train: float
    loss_test: float
    acc_train: float
    acc_test: float
    i_x: list[float] = field(default_factory=list)
    i_y: list[float] = field(default_factory=list)
    i_xbar_t1: float = 0.0
    i_y_yhat: float = 0.0
    i_sw: float = 0.0
    h_y: float = 0.0
    bound: float = 0.0

    @property
    def gap(self) -> float:
        return self.acc_train - self.acc_test

    @property
    def i_xbar(self) -> list[float]:
        return [max(x - y, 0.0) for x, y in zip(self.i_x, self.i_y)]

    def flat(self) -> dict[str, float]:
        """Column name -> value; hidden layers are t1..tI, the output is yhat."""
        row = {
            "epoch": self.epoch,
            "loss_train": self.loss_train,
            "loss_test": self.loss_test,
            "acc_train": self.acc_train,
            "acc_test": self.acc_test,
        }
        names = layer_names(len(self.i_x) - 1)
        for name, ix, iy in zip(names, self.i_x, self.i_y):
            row[f"i_x_{name}"] = ix
            row[f"i_y_{name}"] = iy
        row.update(
            i_xbar_t1=self.i_xbar_t1,
            i_y_yhat=self.i_y_yhat,
            i_sw=self.i_sw,
            h_y=self.h_y,
            bound=self.bound,
            gap=self.gap,
        )
        return row

    @classmethod
    def from_flat(cls, row: dict) -> "MiEpochRecord":
        hidden = sorted(
            int(k[len("i_x_t"):]) for k in row if k.startswith("i_x_t") and k[5:].isdigit()
        )
        names = [f"t{i}" for i in hidden] + ["yhat"]
        scalars = {f.name for f in fields(cls)} - {"i_x", "i_y"}
        kwargs = {k: float(row[k]) for k in scalars if k in row}
        kwargs["epoch"] = int(float(row["epoch"]))
        return cls(
            i_x=[float(row[f"i_x_{n}"]) for n in names],
            i_y=[float(row[f"i_y_{n}"]) for n in names],
            **kwargs,
        )


def layer_names(num_hidden: int) -> list[str]:
    return [f"t{i + 1}" for i in range(num_hidden)] + ["yhat"]


def make_record(
    epoch: int,
    tables: list[CondDistTable],
    labels,
    num_classes: int,
    *,
    loss_train: float,
    loss_test: float,
    acc_train: float,
    acc_test: float,
    bound_cfg: BoundConfig,
) -> MiEpochRecord:
    d = decompose(tables, labels, num_classes)
    return MiEpochRecord(
        epoch=epoch,
        loss_train=loss_train,
        loss_test=loss_test,
        acc_train=acc_train,
        acc_test=acc_test,
        i_x=d.i_x,
        i_y=d.i_y,
        i_xbar_t1=d.i_xbar_t1,
        i_y_yhat=d.i_y_yhat,
        i_sw=d.i_sw,
        h_y=d.h_y,
        bound=gen_bound(d.i_sw * LN2, bound_cfg),
    )
