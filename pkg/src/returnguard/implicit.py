"""Implicit user-product ratings from clickstream signal counts.

A rating is ``sigmoid(bias + w . counts)`` where the weights come from a
logistic regression predicting whether the pair ended in an order.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .domain import EventKind, InteractionEvent

SIGNAL_KINDS = (EventKind.VIEW, EventKind.CLICK, EventKind.CART_ADD, EventKind.ORDER)


@dataclass(frozen=True)
class SignalCounts:
    views: int = 0
    clicks: int = 0
    cart_adds: int = 0
    orders: int = 0

    def __post_init__(self):
        if min(self.views, self.clicks, self.cart_adds, self.orders) < 0:
            raise ValueError("signal counts must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.views, self.clicks, self.cart_adds, self.orders], dtype=np.float64)

    @property
    def total(self) -> int:
        return self.views + self.clicks + self.cart_adds + self.orders


@dataclass(frozen=True)
class SignalWeights:
    w_view: float
    w_click: float
    w_cart: float
    w_order: float
    bias: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.w_view, self.w_click, self.w_cart, self.w_order, self.bias])):
            raise ValueError("signal weights must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.w_view, self.w_click, self.w_cart, self.w_order])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SignalWeights":
        return cls(**json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FitConfig:
    step: float = 0.1
    epochs: int = 500
    l2: float = 1e-4


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_loss(p: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def learn_weights(pairs: Iterable[tuple[SignalCounts, bool]], config: FitConfig = FitConfig(),
                  history: list | None = None) -> SignalWeights:
    """Full-batch gradient descent on L2-regularised log-loss.

    Starts from zero weights, so the result is deterministic. When ``history``
    is given, the training log-loss after every epoch is appended to it.
    """
    pairs = list(pairs)
    x = np.array([c.as_array() for c, _ in pairs], dtype=np.float64).reshape(-1, 4)
    y = np.array([bool(lbl) for _, lbl in pairs], dtype=np.float64)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("learn_weights needs at least one positive and one negative pair")
    n = y.size
    w = np.zeros(4)
    b = 0.0
    for _ in range(config.epochs):
        p = _sigmoid(x @ w + b)
        r = p - y
        w -= config.step * (x.T @ r / n + config.l2 * w)
        b -= config.step * float(r.mean())
        if history is not None:
            history.append(_log_loss(_sigmoid(x @ w + b), y))
    return SignalWeights(float(w[0]), float(w[1]), float(w[2]), float(w[3]), b)


def log_loss(pairs, weights: SignalWeights) -> float:
    pairs = list(pairs)
    x = np.array([c.as_array() for c, _ in pairs]).reshape(-1, 4)
    y = np.array([bool(lbl) for _, lbl in pairs], dtype=np.float64)
    return _log_loss(_sigmoid(x @ weights.vector + weights.bias), y)


def rate(counts: SignalCounts, weights: SignalWeights) -> float:
    z = weights.bias + float(counts.as_array() @ weights.vector)
    return float(_sigmoid(z))


def count_signals(events: Iterable[InteractionEvent], cutoff_ms: int | None = None
                  ) -> dict[tuple[str, str], SignalCounts]:
    """Per (user, product) counts of views, clicks, cart adds and orders.

    Only events strictly before ``cutoff_ms`` are counted when it is given.
    Pairs without any signal are absent.
    """
    acc: dict[tuple[str, str], list[int]] = {}
    slot = {k: i for i, k in enumerate(SIGNAL_KINDS)}
    for e in events:
        if cutoff_ms is not None and e.timestamp >= cutoff_ms:
            continue
        i = slot.get(e.kind)
        if i is None:
            continue
        acc.setdefault((e.user_id, e.product_id), [0, 0, 0, 0])[i] += 1
    return {k: SignalCounts(*v) for k, v in sorted(acc.items())}


def training_pairs(counts: dict[tuple[str, str], SignalCounts]) -> list[tuple[SignalCounts, bool]]:
    return [(c, c.orders > 0) for c in counts.values()]


def ratings_matrix(counts: dict[tuple[str, str], SignalCounts], weights: SignalWeights
                   ) -> list[tuple[str, str, float]]:
    """(user_id, product_id, rating) triples for every pair with a signal."""
    if not counts:
        return []
    keys = list(counts)
    x = np.array([counts[k].as_array() for k in keys])
    r = _sigmoid(x @ weights.vector + weights.bias)
    return [(u, p, float(v)) for (u, p), v in zip(keys, r)]


def write_ratings(path: str | Path, triples) -> None:
    with open(path, "w") as fh:
        for u, p, r in triples:
            fh.write(json.dumps({"user_id": u, "product_id": p, "rating": r}, sort_keys=True))
            fh.write("\n")


def read_ratings(path: str | Path) -> list[tuple[str, str, float]]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append((d["user_id"], d["product_id"], float(d["rating"])))
    return out
