"""Gradient-boosted decision trees on binary log-loss.

Trees grow leaf-wise: the leaf whose best split has the largest gain is
expanded next, until ``max_leaves``, ``max_depth`` or ``min_samples_leaf``
stops growth or no split has positive gain. Split search is exact over the
midpoints between consecutive distinct feature values.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from . import container

KIND = "productgbm"


@dataclass(frozen=True)
class GbmConfig:
    n_trees: int = 50
    max_depth: int = 4
    learning_rate: float = 0.1
    max_leaves: int = 15
    min_samples_leaf: int = 5
    lambda_l2: float = 1.0
    seed: int = 0  # growth is deterministic; kept for config symmetry

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1 or self.max_leaves < 2:
            raise ValueError("need n_trees >= 0, max_depth >= 1, max_leaves >= 2")
        if self.min_samples_leaf < 1 or self.learning_rate <= 0 or self.lambda_l2 < 0:
            raise ValueError("need min_samples_leaf >= 1, learning_rate > 0, lambda_l2 >= 0")

    @classmethod
    def desk(cls, **kw) -> "GbmConfig":
        return cls(**{"n_trees": 50, "max_depth": 4, "max_leaves": 15, "learning_rate": 0.1, **kw})

    @classmethod
    def full_scale(cls, **kw) -> "GbmConfig":
        return cls(**{"n_trees": 250, "max_depth": 7, "max_leaves": 150, "learning_rate": 0.005, **kw})


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf. Rows with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                best = max(best, d)
            else:
                stack += [(int(self.left[node]), d + 1), (int(self.right[node]), d + 1)]
        return best

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass
class BoostedEnsemble:
    base_score: float
    trees: list[Tree]
    n_features: int
    config: GbmConfig = field(default_factory=GbmConfig)
    history: list[float] = field(default_factory=list)
    manifest: str | None = None

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, self.n_features)
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out

    def save(self, path: str | Path) -> None:
        arrays = {}
        for k, t in enumerate(self.trees):
            for name in ("feature", "threshold", "left", "right", "value", "gain", "n_samples"):
                arrays[f"t{k:04d}_{name}"] = getattr(t, name)
        meta = {"base_score": self.base_score, "n_trees": len(self.trees),
                "n_features": self.n_features, "config": asdict(self.config),
                "history": self.history, "manifest": self.manifest}
        container.save(path, KIND, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "BoostedEnsemble":
        meta, arrays = container.load(path, KIND)
        trees = [Tree(*(arrays[f"t{k:04d}_{n}"] for n in
                        ("feature", "threshold", "left", "right", "value", "gain", "n_samples")))
                 for k in range(meta["n_trees"])]
        return cls(meta["base_score"], trees, meta["n_features"], GbmConfig(**meta["config"]),
                   meta["history"], meta["manifest"])


def _check_width(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def split_gain(gl, hl, gr, hr, lam):
    """Half the reduction in the regularised second-order objective."""
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - (gl + gr) ** 2 / (hl + hr + lam))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def sorted_rows(order: np.ndarray, rows: np.ndarray, n_rows: int) -> np.ndarray:
    """Restrict a column-wise argsort (features x rows) to ``rows``, keeping order."""
    mask = np.zeros(n_rows, dtype=bool)
    mask[rows] = True
    return order[mask[order]].reshape(order.shape[0], rows.size)


def best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray,
               lam: float, min_samples_leaf: int) -> Split | None:
    """Highest-gain split of a node; ties go to the lowest feature, then the
    lowest threshold.

    ``idx`` holds the node's row indices sorted by each feature (features x
    node rows). Returns None when no split has positive gain.
    """
    n = idx.shape[1]
    if n < 2 * min_samples_leaf or n < 2:
        return None
    f, pos, best = _scan(X, g, h, idx, float(lam), int(min_samples_leaf))
    if f < 0:
        return None
    a, b = X[idx[f, pos], f], X[idx[f, pos + 1], f]
    thr = 0.5 * (a + b)
    if not a <= thr < b:  # adjacent floats: the midpoint rounded onto b
        thr = a
    return Split(int(f), float(thr), float(best))


@njit(cache=True)
def _scan(X, g, h, idx, lam, msl):
    """Feature-major scan of every valid cut; first strict maximum wins."""
    n_feat, n = idx.shape
    best, best_f, best_pos = 0.0, -1, -1
    for f in range(n_feat):
        G = 0.0
        H = 0.0
        for t in range(n):
            G += g[idx[f, t]]
            H += h[idx[f, t]]
        gl = 0.0
        hl = 0.0
        for pos in range(n - 1):
            r = idx[f, pos]
            gl += g[r]
            hl += h[r]
            if pos + 1 < msl or n - pos - 1 < msl:
                continue
            if not X[r, f] < X[idx[f, pos + 1], f]:
                continue
            gr = G - gl
            hr = H - hl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - (gl + gr) ** 2 / (hl + hr + lam))
            if gain > best:
                best, best_f, best_pos = gain, f, pos
    return best_f, best_pos, best


@njit(cache=True)
def _partition(idx, goes_left):
    """Stable split of every sorted row list into left and right parts."""
    n_feat, n = idx.shape
    n_left = 0
    for t in range(n):
        if goes_left[idx[0, t]]:
            n_left += 1
    left = np.empty((n_feat, n_left), dtype=idx.dtype)
    right = np.empty((n_feat, n - n_left), dtype=idx.dtype)
    for f in range(n_feat):
        a = 0
        b = 0
        for t in range(n):
            r = idx[f, t]
            if goes_left[r]:
                left[f, a] = r
                a += 1
            else:
                right[f, b] = r
                b += 1
    return left, right


def grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, order: np.ndarray, cfg: GbmConfig) -> Tree:
    """Grow one tree; ``order`` is the column-wise argsort of X (features x rows)."""
    lam = cfg.lambda_l2
    feature, threshold, left, right, value, gain, count = [], [], [], [], [], [], []
    idx_of: dict[int, np.ndarray] = {}
    depth_of: dict[int, int] = {}

    def new_leaf(idx: np.ndarray, depth: int) -> int:
        k = len(feature)
        rows = idx[0]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(-g[rows].sum() / (h[rows].sum() + lam) * cfg.learning_rate))
        gain.append(0.0)
        count.append(int(rows.size))
        idx_of[k] = idx
        depth_of[k] = depth
        return k

    def candidate(k: int) -> Split | None:
        if depth_of[k] >= cfg.max_depth:
            return None
        return best_split(X, g, h, idx_of[k], lam, cfg.min_samples_leaf)

    root = new_leaf(order, 0)
    frontier = {root: candidate(root)}
    n_leaves = 1
    while n_leaves < cfg.max_leaves:
        ready = [(s.gain, -k) for k, s in frontier.items() if s is not None]
        if not ready:
            break
        k = -max(ready)[1]
        s = frontier.pop(k)
        idx = idx_of.pop(k)
        goes_left = X[:, s.feature] <= s.threshold
        left_idx, right_idx = _partition(idx, goes_left)
        lk = new_leaf(left_idx, depth_of[k] + 1)
        rk = new_leaf(right_idx, depth_of[k] + 1)
        feature[k], threshold[k], left[k], right[k], gain[k] = s.feature, s.threshold, lk, rk, s.gain
        value[k] = 0.0
        frontier[lk] = candidate(lk)
        frontier[rk] = candidate(rk)
        n_leaves += 1
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(gain),
                np.array(count, dtype=np.int64))


def fit(X, y, cfg: GbmConfig = GbmConfig(), manifest: str | None = None) -> BoostedEnsemble:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (rows, features) with one label per row")
    pos = float(y.sum())
    neg = float(y.size - pos)
    if pos == 0 or neg == 0:
        raise ValueError("fit needs both positive and negative rows")
    base = math.log(pos / neg)
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    F = np.full(y.size, base)
    trees, history = [], []
    for _ in range(cfg.n_trees):
        p = sigmoid(F)
        t = grow_tree(X, p - y, p * (1 - p), order, cfg)
        trees.append(t)
        F += t.predict(X)
        history.append(log_loss(y, sigmoid(F)))
    return BoostedEnsemble(base, trees, X.shape[1], cfg, history, manifest)


def predict_many(model: BoostedEnsemble, X) -> np.ndarray:
    return sigmoid(model.margin(X))


def predict(model: BoostedEnsemble, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes one vector; use predict_many for a matrix")
    return float(predict_many(model, x)[0])


def second_stage_rows(carts, ctx, cart_model, cart_threshold: float):
    """Product vectors and per-item labels of carts scored at or above the threshold."""
    from . import cartnet
    from .features import assemble_all

    rows, labels = [], []
    for cart in carts:
        if cart.per_item_returned is None:
            raise ValueError(f"cart {cart.cart_id} has no labels")
        block, items = assemble_all(cart, ctx)
        if cartnet.predict_many(cart_model, block[None, :])[0] >= cart_threshold:
            rows.append(items)
            labels += list(cart.per_item_returned)
    X = np.vstack(rows) if rows else np.zeros((0, 0))
    return X, np.array(labels, dtype=bool)


def fit_second_stage(carts, cart_model, ctx, cfg: GbmConfig = GbmConfig(),
                     cart_threshold: float = 0.5, manifest: str | None = None) -> BoostedEnsemble:
    X, y = second_stage_rows(carts, ctx, cart_model, cart_threshold)
    if y.size == 0 or y.all() or not y.any():
        raise ValueError(f"{y.size} item rows from carts scored >= {cart_threshold} "
                         f"({int(y.sum())} returned): need both classes; "
                         "try a lower cart_threshold")
    return fit(X, y, cfg, manifest)


def dump(model: BoostedEnsemble, names: Sequence[str] | None = None) -> str:
    """Indented text rendering of every tree."""
    lines = [f"base_score {model.base_score:.6f}  trees {len(model.trees)}"]
    for k, t in enumerate(model.trees):
        lines.append(f"tree {k}")
        stack = [(0, 1)]
        while stack:
            node, d = stack.pop()
            pad = "  " * d
            f = int(t.feature[node])
            if f < 0:
                lines.append(f"{pad}leaf {t.value[node]:+.6f} (n={t.n_samples[node]})")
            else:
                fname = names[f] if names is not None else f"x[{f}]"
                lines.append(f"{pad}{fname} <= {t.threshold[node]:.6g} (gain={t.gain[node]:.4f}, "
                             f"n={t.n_samples[node]})")
                stack += [(int(t.right[node]), d + 1), (int(t.left[node]), d + 1)]
    return "\n".join(lines) + "\n"
