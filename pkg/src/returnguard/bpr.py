"""Matrix factorisation trained with Bayesian Personalized Ranking.

Per sampled triplet (u, i, j) the loss is

    -ln sigmoid(x_uij) + lambda * (|w_u|^2 + |h_i|^2 + |h_j|^2),
    x_uij = <w_u, h_i> - <w_u, h_j>

and one SGD step touches only those three vectors.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import container

KIND = "bpr"


@dataclass(frozen=True)
class BprConfig:
    dim: int = 32
    learning_rate: float = 0.05
    lambda_theta: float = 1e-2
    epochs: int = 30
    triplets_per_epoch: int | None = None  # None: one pass worth of observed pairs
    seed: int = 0
    # small start so item directions come from the data rather than the draw
    init_scale: float = 0.001

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.lambda_theta < 0:
            raise ValueError("lambda_theta must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class NonFiniteUpdate(FloatingPointError):
    """An SGD step produced inf/nan; usually the learning rate is too high."""


@dataclass(frozen=True)
class Triplet:
    user: str
    pos: str
    neg: str


@dataclass
class ImplicitMatrix:
    """Observed (user, item) pairs in CSR form over a fixed item universe."""

    user_ids: list[str]
    item_ids: list[str]
    indptr: np.ndarray
    indices: np.ndarray
    _keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n_items = len(self.item_ids)
        rows = np.repeat(np.arange(len(self.user_ids), dtype=np.int64), np.diff(self.indptr))
        self._keys = np.sort(rows * n_items + self.indices)

    @classmethod
    def from_ratings(cls, triples, item_ids=None, threshold: float = 0.5) -> "ImplicitMatrix":
        """Pairs with rating >= threshold are observed; the rest stay implicit."""
        triples = list(triples)
        users = sorted({u for u, _, _ in triples})
        items = sorted(set(item_ids) if item_ids is not None else {p for _, p, _ in triples})
        return cls.from_pairs([(u, p) for u, p, r in triples if r >= threshold], users, items)

    @classmethod
    def from_pairs(cls, pairs, user_ids, item_ids) -> "ImplicitMatrix":
        uidx = {u: k for k, u in enumerate(user_ids)}
        iidx = {p: k for k, p in enumerate(item_ids)}
        per_user: list[set[int]] = [set() for _ in user_ids]
        for u, p in pairs:
            if p not in iidx:
                raise KeyError(f"item {p!r} not in item universe")
            per_user[uidx[u]].add(iidx[p])
        lengths = [len(s) for s in per_user]
        indptr = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
        indices = np.array([i for s in per_user for i in sorted(s)], dtype=np.int64)
        return cls(list(user_ids), list(item_ids), indptr, indices)

    @property
    def n_observed(self) -> int:
        return int(self.indices.size)

    def observed(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        keys = users * len(self.item_ids) + items
        if self._keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self._keys, keys), self._keys.size - 1)
        return self._keys[pos] == keys

    def eligible_users(self) -> np.ndarray:
        deg = np.diff(self.indptr)
        return np.flatnonzero((deg > 0) & (deg < len(self.item_ids)))


def sample_triplets(matrix: ImplicitMatrix, rng: np.random.Generator, n: int
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised uniform sampling: user among eligible users, i among the
    user's observed items, j among the items the user has not interacted with.
    """
    eligible = matrix.eligible_users()
    if eligible.size == 0:
        raise ValueError("no user has both an observed and an unobserved item")
    u = eligible[rng.integers(eligible.size, size=n)]
    deg = np.diff(matrix.indptr)[u]
    i = matrix.indices[matrix.indptr[u] + (rng.random(n) * deg).astype(np.int64)]
    j = rng.integers(len(matrix.item_ids), size=n)
    bad = matrix.observed(u, j)
    while bad.any():
        j[bad] = rng.integers(len(matrix.item_ids), size=int(bad.sum()))
        bad = matrix.observed(u, j)
    return u, i, j


def sample_triplet(matrix: ImplicitMatrix, rng: np.random.Generator) -> Triplet:
    u, i, j = sample_triplets(matrix, rng, 1)
    return Triplet(matrix.user_ids[u[0]], matrix.item_ids[i[0]], matrix.item_ids[j[0]])


@dataclass
class EmbeddingMatrix:
    user_ids: list[str]
    item_ids: list[str]
    user_factors: np.ndarray
    item_factors: np.ndarray
    seed: int = 0
    _uidx: dict = field(init=False, repr=False)
    _iidx: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._uidx = {u: k for k, u in enumerate(self.user_ids)}
        self._iidx = {p: k for k, p in enumerate(self.item_ids)}
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factors differ in dimension")

    @property
    def dim(self) -> int:
        return int(self.item_factors.shape[1])

    def has_item(self, pid: str) -> bool:
        return pid in self._iidx

    def has_user(self, uid: str) -> bool:
        return uid in self._uidx

    def user_index(self, uid: str) -> int:
        try:
            return self._uidx[uid]
        except KeyError:
            raise KeyError(f"unknown user {uid!r}") from None

    def item_index(self, pid: str) -> int:
        try:
            return self._iidx[pid]
        except KeyError:
            raise KeyError(f"unknown product {pid!r}") from None

    def item_vector(self, pid: str) -> np.ndarray:
        return self.item_factors[self.item_index(pid)]

    def copy(self) -> "EmbeddingMatrix":
        return EmbeddingMatrix(list(self.user_ids), list(self.item_ids), self.user_factors.copy(),
                               self.item_factors.copy(), self.seed)

    def save(self, path: str | Path, config: BprConfig | None = None) -> None:
        meta = {
            "d": self.dim,
            "counts": {"users": len(self.user_ids), "items": len(self.item_ids)},
            "seed": self.seed,
            "user_ids": self.user_ids,
            "item_ids": self.item_ids,
            "config": asdict(config) if config is not None else None,
        }
        container.save(path, KIND, meta, {"user_factors": self.user_factors,
                                          "item_factors": self.item_factors})

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingMatrix":
        meta, arrays = container.load(path, KIND)
        return cls(meta["user_ids"], meta["item_ids"], arrays["user_factors"],
                   arrays["item_factors"], meta["seed"])


# --------------------------------------------------------------------------
# numeric kernels (shared by the single-step API and the training loop)


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        s += a[k] * b[k]
    return s


@njit(cache=True)
def _score(w, hi, hj):
    return _dot(w, hi) - _dot(w, hj)


@njit(cache=True)
def _grads(w, hi, hj, lam, gw, ghi, ghj):
    """Fill gradients of the per-triplet loss; return (x_uij, loss)."""
    x = _score(w, hi, hj)
    # 1 - sigmoid(x) computed without overflow
    if x >= 0:
        e = math.exp(-x)
        c = e / (1.0 + e)
        data = math.log1p(e)
    else:
        e = math.exp(x)
        c = 1.0 / (1.0 + e)
        data = -x + math.log1p(e)
    reg = 0.0
    for k in range(w.shape[0]):
        gw[k] = -c * (hi[k] - hj[k]) + 2.0 * lam * w[k]
        ghi[k] = -c * w[k] + 2.0 * lam * hi[k]
        ghj[k] = c * w[k] + 2.0 * lam * hj[k]
        reg += w[k] * w[k] + hi[k] * hi[k] + hj[k] * hj[k]
    return x, data + lam * reg


@njit(cache=True)
def _step(W, H, u, i, j, lr, lam, gw, ghi, ghj):
    _grads(W[u], H[i], H[j], lam, gw, ghi, ghj)
    ok = True
    for k in range(W.shape[1]):
        W[u, k] -= lr * gw[k]
        H[i, k] -= lr * ghi[k]
        H[j, k] -= lr * ghj[k]
        if not (math.isfinite(W[u, k]) and math.isfinite(H[i, k]) and math.isfinite(H[j, k])):
            ok = False
    return ok


@njit(cache=True)
def _run(W, H, us, is_, js, lr, lam):
    d = W.shape[1]
    gw = np.empty(d)
    ghi = np.empty(d)
    ghj = np.empty(d)
    for t in range(us.shape[0]):
        if not _step(W, H, us[t], is_[t], js[t], lr, lam, gw, ghi, ghj):
            return t
    return -1


def triplet_loss_and_grads(w, hi, hj, lam: float):
    """Per-triplet loss and its gradients w.r.t. (w_u, h_i, h_j)."""
    w, hi, hj = (np.ascontiguousarray(a, dtype=np.float64) for a in (w, hi, hj))
    gw, ghi, ghj = np.empty_like(w), np.empty_like(w), np.empty_like(w)
    _, loss = _grads(w, hi, hj, float(lam), gw, ghi, ghj)
    return loss, gw, ghi, ghj


def triplet_loss(w, hi, hj, lam: float) -> float:
    return triplet_loss_and_grads(w, hi, hj, lam)[0]


# --------------------------------------------------------------------------
# public operations


def initialize(matrix: ImplicitMatrix, cfg: BprConfig) -> tuple[EmbeddingMatrix, np.random.Generator]:
    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(0.0, cfg.init_scale, size=(len(matrix.user_ids), cfg.dim))
    H = rng.normal(0.0, cfg.init_scale, size=(len(matrix.item_ids), cfg.dim))
    return EmbeddingMatrix(list(matrix.user_ids), list(matrix.item_ids), W, H, cfg.seed), rng


def bpr_step(emb: EmbeddingMatrix, t: Triplet, cfg: BprConfig) -> EmbeddingMatrix:
    """One SGD step on triplet ``t``; returns a new matrix, ``emb`` is untouched."""
    if t.pos == t.neg:
        raise ValueError("triplet needs distinct positive and negative items")
    u, i, j = emb.user_index(t.user), emb.item_index(t.pos), emb.item_index(t.neg)
    out = emb.copy()
    d = emb.dim
    ok = _step(out.user_factors, out.item_factors, u, i, j, cfg.learning_rate, cfg.lambda_theta,
               np.empty(d), np.empty(d), np.empty(d))
    if not ok:
        raise NonFiniteUpdate(f"non-finite factors after step on {t}")
    return out


def triplet_score(emb: EmbeddingMatrix, t: Triplet) -> float:
    """x_uij exactly as the SGD step computes it."""
    return float(_score(emb.user_factors[emb.user_index(t.user)],
                        emb.item_factors[emb.item_index(t.pos)],
                        emb.item_factors[emb.item_index(t.neg)]))


def train(matrix: ImplicitMatrix, cfg: BprConfig = BprConfig()) -> EmbeddingMatrix:
    emb, rng = initialize(matrix, cfg)
    per_epoch = cfg.triplets_per_epoch or max(matrix.n_observed, 1)
    if cfg.epochs > 0 and matrix.eligible_users().size == 0:
        raise ValueError("no user has both an observed and an unobserved item")
    for epoch in range(cfg.epochs):
        u, i, j = sample_triplets(matrix, rng, per_epoch)
        bad = _run(emb.user_factors, emb.item_factors, u, i, j, cfg.learning_rate, cfg.lambda_theta)
        if bad >= 0:
            raise NonFiniteUpdate(f"non-finite factors at epoch {epoch}, step {bad}; "
                                  f"learning_rate={cfg.learning_rate} is likely too high")
    return emb


def affinity(emb: EmbeddingMatrix, user: str, item: str) -> float:
    return float(_dot(emb.user_factors[emb.user_index(user)],
                      emb.item_factors[emb.item_index(item)]))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.sqrt(_dot(a, a))), float(np.sqrt(_dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    c = _dot(a, b) / (na * nb)
    return float(min(1.0, max(-1.0, c)))


def similarity(emb: EmbeddingMatrix, p_i: str, p_j: str) -> float:
    """Cosine between two item factor vectors."""
    return cosine(emb.item_vector(p_i), emb.item_vector(p_j))


def ranking_auc(emb: EmbeddingMatrix, train: ImplicitMatrix, held_out: dict[str, set[str]]) -> float:
    """Mean per-user AUC of held-out items against items never seen by the user."""
    from .evaluation import auc

    scores = []
    for user, pos in held_out.items():
        if not pos or not emb.has_user(user):
            continue
        uk = train.user_ids.index(user)
        seen = set(train.indices[train.indptr[uk]:train.indptr[uk + 1]].tolist())
        s = emb.item_factors @ emb.user_factors[emb.user_index(user)]
        pos_idx = [emb.item_index(p) for p in pos]
        neg_idx = [k for k in range(len(emb.item_ids)) if k not in seen and emb.item_ids[k] not in pos]
        if not neg_idx:
            continue
        labels = np.r_[np.ones(len(pos_idx)), np.zeros(len(neg_idx))]
        scores.append(auc(np.r_[s[pos_idx], s[neg_idx]], labels))
    return float(np.mean(scores))
