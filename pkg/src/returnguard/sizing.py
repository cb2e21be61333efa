"""Personalised sizing vectors from a skip-gram model over size tokens.

A size token names what a shopper wears in a line of products, for example
``Nike-Men-Shoes-Sports-10``. Each user's cart items, in cart-add order, form
one token sequence. The model maximises the mean of ``log p(context | center)``
over window pairs, with ``p`` a full softmax over the vocabulary:

    p(t | c) = exp(<u_c, v_t>) / sum_w exp(<u_c, v_w>)

``u`` are the input vectors (the sizing vectors) and ``v`` the output vectors.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import math

import numpy as np
from numba import njit

from . import container
from .domain import CartRecord, ProductRecord

KIND = "sizing"
N_FIELDS = 5


# --------------------------------------------------------------------------
# tokens


def _escape(part: str) -> str:
    return part.replace("\\", "\\\\").replace("-", "\\-")


def join_fields(fields: Sequence[str]) -> str:
    if len(fields) != N_FIELDS:
        raise ValueError(f"a size token has {N_FIELDS} fields, got {len(fields)}")
    for f in fields:
        if not f:
            raise ValueError(f"empty field in size token fields {tuple(fields)!r}")
    return "-".join(_escape(f) for f in fields)


def parse_token(text: str) -> tuple[str, ...]:
    """Split on unescaped dashes and undo the escaping."""
    parts, buf = [], []
    it = iter(text)
    for ch in it:
        if ch == "\\":
            nxt = next(it, None)
            if nxt not in ("\\", "-"):
                raise ValueError(f"bad escape in size token {text!r}")
            buf.append(nxt)
        elif ch == "-":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    if len(parts) != N_FIELDS or not all(parts):
        raise ValueError(f"malformed size token {text!r}")
    return tuple(parts)


def tokenize(product: ProductRecord) -> str:
    """Brand-Gender-Category-Usage-Size with dashes inside a field escaped."""
    return join_fields((product.brand, product.gender.value, product.category, product.usage,
                        product.size))


@dataclass(frozen=True)
class SizeToken:
    text: str
    token_id: int


@dataclass(frozen=True)
class UserSequence:
    user_id: str
    tokens: tuple[str, ...]
    timestamps: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.timestamps):
            raise ValueError("tokens and timestamps differ in length")
        if any(a > b for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("sequence timestamps must be non-decreasing")


def build_sequences(carts: Iterable[CartRecord], catalog: dict[str, ProductRecord] | Sequence[ProductRecord]
                    ) -> list[UserSequence]:
    """One sequence per user with at least one cart item, sorted by user id.

    Items from all of a user's carts are merged by cart-add time, ties broken
    by product id.
    """
    if not isinstance(catalog, dict):
        catalog = {p.product_id: p for p in catalog}
    rows: dict[str, list[tuple[int, str]]] = defaultdict(list)
    for cart in carts:
        for item in cart.items:
            if item.product_id not in catalog:
                raise KeyError(f"cart {cart.cart_id} references unknown product {item.product_id!r}")
            rows[cart.user_id].append((item.cart_add_ts, item.product_id))
    out = []
    for user in sorted(rows):
        items = sorted(rows[user])
        out.append(UserSequence(user, tuple(tokenize(catalog[p]) for _, p in items),
                                tuple(ts for ts, _ in items)))
    return out


def context_pairs(seq: Sequence[int], window: int) -> list[tuple[int, int]]:
    """(center, context) positions within ``window`` of each other, k != 0."""
    n = len(seq)
    return [(j, j + k) for j in range(n) for k in range(-window, window + 1)
            if k != 0 and 0 <= j + k < n]


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class SkipGramConfig:
    window: int = 3
    dim: int = 16
    learning_rate: float = 0.025
    epochs: int = 10
    seed: int = 0
    negatives: int = 0  # 0 = full softmax; K > 0 = sampled softmax with K negatives
    probe_pairs: int = 2000

    def __post_init__(self):
        if self.window < 1 or self.dim < 1 or self.epochs < 0 or self.negatives < 0:
            raise ValueError("window and dim must be >= 1; epochs and negatives >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class SkipGramModel:
    vocab: list[str]
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    window: int
    counts: list[int] | None = None
    history: list[float] = field(default_factory=list)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {t: k for k, t in enumerate(self.vocab)}
        if self.input_vectors.shape != self.output_vectors.shape:
            raise ValueError("input and output tables differ in shape")
        if self.input_vectors.shape[0] != len(self.vocab):
            raise ValueError("vector table does not match the vocabulary")

    @property
    def dim(self) -> int:
        return int(self.input_vectors.shape[1])

    def __contains__(self, text: str) -> bool:
        return text in self._index

    def token(self, text: str) -> SizeToken:
        try:
            return SizeToken(text, self._index[text])
        except KeyError:
            raise KeyError(f"size token {text!r} not in vocabulary") from None

    def vector(self, text: str) -> np.ndarray:
        return self.input_vectors[self.token(text).token_id]

    def save(self, path: str | Path, config: SkipGramConfig | None = None) -> None:
        meta = {"vocab": self.vocab, "window": self.window, "dim": self.dim,
                "counts": self.counts, "history": self.history,
                "config": asdict(config) if config is not None else None}
        container.save(path, KIND, meta, {"input": self.input_vectors, "output": self.output_vectors})

    @classmethod
    def load(cls, path: str | Path) -> "SkipGramModel":
        meta, arrays = container.load(path, KIND)
        return cls(meta["vocab"], arrays["input"], arrays["output"], meta["window"],
                   meta["counts"], meta["history"])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_prob(model: SkipGramModel, center: int, target: int) -> float:
    logits = model.output_vectors @ model.input_vectors[center]
    return float(np.exp(_log_softmax(logits)[target]))


def center_loss_and_grads(u: np.ndarray, V: np.ndarray, targets: Sequence[int]
                          ) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative summed log-softmax of ``targets`` given input vector ``u``.

    Returns (loss, d loss / d u, d loss / d V).
    """
    targets = np.asarray(targets, dtype=np.int64)
    logp = _log_softmax(V @ u)
    p = np.exp(logp)
    counts = np.bincount(targets, minlength=V.shape[0]).astype(np.float64)
    n = float(targets.size)
    loss = float(-logp[targets].sum())
    err = n * p - counts
    return loss, V.T @ err, np.outer(err, u)


@njit(cache=True)
def _full_softmax_epoch(U, V, centers, ctx_ptr, ctx, lrs):
    n_vocab, d = V.shape
    logits = np.empty(n_vocab)
    err = np.empty(n_vocab)
    gu = np.empty(d)
    for s in range(centers.shape[0]):
        c = centers[s]
        lo, hi = ctx_ptr[s], ctx_ptr[s + 1]
        n = hi - lo
        if n == 0:
            continue
        m = -np.inf
        for w in range(n_vocab):
            acc = 0.0
            for k in range(d):
                acc += U[c, k] * V[w, k]
            logits[w] = acc
            if acc > m:
                m = acc
        z = 0.0
        for w in range(n_vocab):
            logits[w] = math.exp(logits[w] - m)
            z += logits[w]
        for w in range(n_vocab):
            err[w] = n * logits[w] / z
        for t in range(lo, hi):
            err[ctx[t]] -= 1.0
        for k in range(d):
            gu[k] = 0.0
        for w in range(n_vocab):
            e = err[w]
            for k in range(d):
                gu[k] += e * V[w, k]
        lr = lrs[s]
        for w in range(n_vocab):
            e = lr * err[w]
            for k in range(d):
                V[w, k] -= e * U[c, k]
        for k in range(d):
            U[c, k] -= lr * gu[k]
            if not math.isfinite(U[c, k]):
                return s
    return -1


@njit(cache=True)
def _sampled_softmax_epoch(U, V, centers, ctx_ptr, ctx, lrs, negs):
    # softmax restricted to {target} + K sampled negatives, one step per pair
    d = U.shape[1]
    k_neg = negs.shape[1]
    cand = np.empty(k_neg + 1, dtype=np.int64)
    logits = np.empty(k_neg + 1)
    gu = np.empty(d)
    q = 0
    for s in range(centers.shape[0]):
        c = centers[s]
        lr = lrs[s]
        for t in range(ctx_ptr[s], ctx_ptr[s + 1]):
            cand[0] = ctx[t]
            for r in range(k_neg):
                cand[r + 1] = negs[q, r]
            q += 1
            m = -np.inf
            for r in range(k_neg + 1):
                acc = 0.0
                for k in range(d):
                    acc += U[c, k] * V[cand[r], k]
                logits[r] = acc
                if acc > m:
                    m = acc
            z = 0.0
            for r in range(k_neg + 1):
                logits[r] = math.exp(logits[r] - m)
                z += logits[r]
            for k in range(d):
                gu[k] = 0.0
            for r in range(k_neg + 1):
                e = logits[r] / z - (1.0 if r == 0 else 0.0)
                for k in range(d):
                    gu[k] += e * V[cand[r], k]
                    V[cand[r], k] -= lr * e * U[c, k]
            for k in range(d):
                U[c, k] -= lr * gu[k]
                if not math.isfinite(U[c, k]):
                    return s
    return -1


def _encode(seqs: Sequence[UserSequence]) -> tuple[list[str], list[int], list[np.ndarray]]:
    counts = Counter(t for s in seqs for t in s.tokens)
    vocab = sorted(counts)
    index = {t: k for k, t in enumerate(vocab)}
    encoded = [np.array([index[t] for t in s.tokens], dtype=np.int64) for s in seqs]
    return vocab, [counts[t] for t in vocab], encoded


def _windows(encoded: Sequence[np.ndarray], window: int):
    """Flatten sequences into (center ids, CSR pointer, context ids)."""
    centers, ptr, ctx = [], [0], []
    for seq in encoded:
        n = len(seq)
        for j in range(n):
            near = [seq[j + k] for k in range(-window, window + 1) if k != 0 and 0 <= j + k < n]
            if near:
                centers.append(seq[j])
                ctx.extend(near)
                ptr.append(len(ctx))
    return (np.array(centers, dtype=np.int64), np.array(ptr, dtype=np.int64),
            np.array(ctx, dtype=np.int64))


def mean_log_prob(U: np.ndarray, V: np.ndarray, pairs: np.ndarray) -> float:
    """Mean log p(context | center) over an (n, 2) array of token-id pairs."""
    logp = _log_softmax(U[pairs[:, 0]] @ V.T)
    return float(logp[np.arange(len(pairs)), pairs[:, 1]].mean())


def train_skipgram(seqs: Sequence[UserSequence], cfg: SkipGramConfig = SkipGramConfig()
                   ) -> SkipGramModel:
    """SGD over (center, all contexts in window) groups with linear lr decay.

    User sequences are visited in one seeded random order, drawn once and kept
    for every epoch. ``model.history`` holds the mean log-probability of a
    fixed probe set of training pairs after each epoch.
    """
    vocab, counts, encoded = _encode(seqs)
    if len(vocab) < 2:
        raise ValueError("skip-gram needs a vocabulary of at least 2 tokens")
    rng = np.random.default_rng(cfg.seed)
    U = rng.normal(0.0, 0.01, size=(len(vocab), cfg.dim))
    V = rng.normal(0.0, 0.01, size=(len(vocab), cfg.dim))
    all_pairs = [(seq[j], seq[k]) for seq in encoded for j, k in context_pairs(seq, cfg.window)]
    if not all_pairs:
        raise ValueError("no (center, context) pair within the window")
    all_pairs = np.array(all_pairs, dtype=np.int64)
    probe = all_pairs[np.sort(rng.permutation(len(all_pairs))[:cfg.probe_pairs])]
    noise = np.asarray(counts, dtype=np.float64) ** 0.75
    noise /= noise.sum()
    history: list[float] = []
    total = cfg.epochs * len(all_pairs)
    done = 0
    # a fixed order: reshuffling each epoch lets the last users visited pull the
    # probe log-probability down between epochs at the default learning rate
    order = rng.permutation(len(encoded))
    centers, ptr, ctx = _windows([encoded[i] for i in order], cfg.window)
    n_ctx = np.diff(ptr)
    for epoch in range(cfg.epochs):
        progress = done + np.cumsum(n_ctx) - n_ctx
        lrs = cfg.learning_rate * np.maximum(1.0 - progress / total, 1e-4)
        if cfg.negatives:
            negs = rng.choice(len(vocab), size=(len(ctx), cfg.negatives), p=noise)
            bad = _sampled_softmax_epoch(U, V, centers, ptr, ctx, lrs, negs)
        else:
            bad = _full_softmax_epoch(U, V, centers, ptr, ctx, lrs)
        if bad >= 0 or not (np.isfinite(U).all() and np.isfinite(V).all()):
            raise FloatingPointError(f"non-finite skip-gram loss in epoch {epoch}")
        done += len(ctx)
        history.append(mean_log_prob(U, V, probe))
    return SkipGramModel(vocab, U, V, cfg.window, counts, history)


def user_sizing_vector(model: SkipGramModel, tokens: Sequence[str] | UserSequence) -> np.ndarray:
    """Element-wise mean of the input vectors of the user's tokens."""
    if isinstance(tokens, UserSequence):
        tokens = tokens.tokens
    if len(tokens) == 0:
        raise ValueError("empty size-token sequence")
    ids = [model.token(t).token_id for t in tokens]
    return model.input_vectors[ids].mean(axis=0)


# --------------------------------------------------------------------------
# neighbourhood diagnostics


def nearest_token(model: SkipGramModel, text: str) -> str:
    """Most cosine-similar other token by input vector; ties go to the lower id."""
    U = model.input_vectors
    norms = np.linalg.norm(U, axis=1)
    norms[norms == 0] = 1.0
    k = model.token(text).token_id
    sims = (U @ U[k]) / (norms * norms[k])
    sims[k] = -np.inf
    return model.vocab[int(np.argmax(sims))]


@dataclass(frozen=True)
class NeighbourhoodReport:
    n_probes: int
    same_line_share: float  # nearest neighbour shares brand and category
    modal_step: int | None  # most common |size step| among same-line neighbours
    step_counts: dict[int, int]


def neighbourhood_report(model: SkipGramModel, size_step: Callable[[str, str], int],
                         min_count: int = 5) -> NeighbourhoodReport:
    """Probe every token seen at least ``min_count`` times.

    ``size_step(category, size)`` maps a size to its position on the
    category's ordered scale.
    """
    counts = model.counts or [min_count] * len(model.vocab)
    probes = [t for t, c in zip(model.vocab, counts) if c >= min_count]
    same, steps = 0, Counter()
    for t in probes:
        b, _, c, _, s = parse_token(t)
        nb = parse_token(nearest_token(model, t))
        if (nb[0], nb[2]) == (b, c):
            same += 1
            steps[abs(size_step(c, nb[4]) - size_step(c, s))] += 1
    modal = min(steps, key=lambda k: (-steps[k], k)) if steps else None
    return NeighbourhoodReport(len(probes), same / len(probes) if probes else 0.0, modal,
                               dict(sorted(steps.items())))
