"""Engineered features and the cart / product input vectors.

Every slot of an assembled vector has a name of the form ``group:detail``.
The group prefix (basic, eng, bpr, size) drives the feature-group ablation.
Aggregates are computed from history strictly before a cutoff time, so the
same values are available offline and at serving time.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bpr import EmbeddingMatrix
from .domain import CartRecord, EventKind, InteractionEvent, PaymentMode, ProductRecord
from .sizing import SkipGramModel, tokenize

DAY_MS = 86_400_000
RETURN_WINDOWS = (("month", 30), ("quarter", 90), ("half_year", 182), ("year", 365))
DEFAULT_TAU = 0.8
DEFAULT_CLUSTERS = 8
PERCENTILE = 65.0
OTHER = "OTHER"
CART_COLUMNS = ("delivery_city", "platform", "payment_mode")
ITEM_COLUMNS = ("brand", "category")


# --------------------------------------------------------------------------
# categorical encoding


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value."""
    if not values:
        raise ValueError("percentile of an empty collection")
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def retained_values(freq: Mapping[str, int], q: float = PERCENTILE) -> tuple[str, ...]:
    """Values whose frequency reaches the q-th percentile of all frequencies."""
    if not freq:
        return ()
    cut = nearest_rank(list(freq.values()), q)
    return tuple(sorted(v for v, n in freq.items() if n >= cut))


@dataclass(frozen=True)
class EncoderSpec:
    """Retained values per categorical column; everything else is OTHER."""

    columns: dict[str, tuple[str, ...]]

    def width(self, column: str) -> int:
        return len(self.columns[column]) + 1

    def slots(self, column: str) -> list[str]:
        return [*self.columns[column], OTHER]

    def index(self, column: str, value: str) -> int:
        kept = self.columns[column]
        try:
            return kept.index(value)
        except ValueError:
            return len(kept)

    def one_hot(self, column: str, value: str) -> np.ndarray:
        out = np.zeros(self.width(column))
        out[self.index(column, value)] = 1.0
        return out

    def to_json(self) -> dict:
        return {"percentile": PERCENTILE, "columns": {k: list(v) for k, v in sorted(self.columns.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "EncoderSpec":
        return cls({k: tuple(v) for k, v in d["columns"].items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EncoderSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def _cart_value(cart: CartRecord, column: str) -> str:
    v = getattr(cart, column)
    return v.value if hasattr(v, "value") else str(v)


def fit_encoder(carts: Iterable[CartRecord], catalog: Mapping[str, ProductRecord]) -> EncoderSpec:
    """Cart columns count once per cart; product columns once per cart item."""
    freq: dict[str, Counter] = {c: Counter() for c in CART_COLUMNS + ITEM_COLUMNS}
    n = 0
    for cart in carts:
        n += 1
        for c in CART_COLUMNS:
            freq[c][_cart_value(cart, c)] += 1
        for pid in cart.product_ids:
            p = catalog.get(pid)
            if p is not None:
                for c in ITEM_COLUMNS:
                    freq[c][getattr(p, c)] += 1
    if n == 0:
        raise ValueError("fit_encoder needs at least one cart")
    return EncoderSpec({c: retained_values(freq[c]) for c in CART_COLUMNS + ITEM_COLUMNS})


# --------------------------------------------------------------------------
# within-cart counts


def similar_counts(vectors: Sequence[np.ndarray | None], tau: float = DEFAULT_TAU) -> list[int]:
    """Per item, the number of other items with cosine >= tau.

    ``None`` marks an item without a vector; it neither counts nor is counted.
    """
    idx = [k for k, v in enumerate(vectors) if v is not None]
    out = [0] * len(vectors)
    if len(idx) < 2:
        return out
    M = np.array([vectors[k] for k in idx], dtype=np.float64)
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0):
        raise ValueError("cosine similarity undefined for a zero vector")
    U = M / norms[:, None]
    S = U @ U.T
    hits = (S >= tau).sum(axis=1) - (np.diag(S) >= tau)
    for k, h in zip(idx, hits):
        out[k] = int(h)
    return out


def n_similar(cart: CartRecord | Sequence[str], emb: EmbeddingMatrix, tau: float = DEFAULT_TAU) -> list[int]:
    ids = cart.product_ids if isinstance(cart, CartRecord) else list(cart)
    return similar_counts([emb.item_vector(p) for p in ids], tau)


def n_style_group(cart: CartRecord | Sequence[str], catalog: Mapping[str, ProductRecord]) -> list[int]:
    """Per item, the number of other items sharing its style group."""
    ids = cart.product_ids if isinstance(cart, CartRecord) else list(cart)
    groups = [catalog[p].style_group_id if p in catalog else None for p in ids]
    freq = Counter(g for g in groups if g is not None)
    return [freq[g] - 1 if g is not None else 0 for g in groups]


# --------------------------------------------------------------------------
# history aggregates


@dataclass(frozen=True)
class ProductStats:
    return_scores: tuple[float, ...]  # one per RETURN_WINDOWS entry
    orders: tuple[int, ...]

    @classmethod
    def empty(cls) -> "ProductStats":
        k = len(RETURN_WINDOWS)
        return cls((0.0,) * k, (0,) * k)


@dataclass(frozen=True)
class UserStats:
    order_count: int = 0
    quantity: int = 0
    return_count: int = 0
    revenue: float = 0.0
    cod_share: float = 0.0
    purchase_frequency: float = 0.0
    cluster: int = -1  # -1: no cluster (cold user)
    history_tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if self.return_count > self.quantity:
            raise ValueError("return_count cannot exceed quantity")

    @property
    def return_rate(self) -> float:
        return self.return_count / self.quantity if self.quantity else 0.0

    def aggregates(self) -> list[float]:
        return [self.order_count, self.quantity, self.return_count, self.revenue, self.cod_share,
                self.purchase_frequency]


def match_returns(events: Iterable[InteractionEvent], cutoff_ms: int
                  ) -> list[tuple[str, str, int, int | None]]:
    """(user, product, order_ts, return_ts or None) for every order before the cutoff.

    Each return before the cutoff is matched to the earliest unmatched order
    of the same user and product placed at or before it.
    """
    orders: dict[tuple[str, str], list[int]] = defaultdict(list)
    returns: dict[tuple[str, str], list[int]] = defaultdict(list)
    for e in events:
        if e.timestamp >= cutoff_ms:
            continue
        if e.kind is EventKind.ORDER:
            orders[(e.user_id, e.product_id)].append(e.timestamp)
        elif e.kind is EventKind.RETURN:
            returns[(e.user_id, e.product_id)].append(e.timestamp)
    out = []
    for key in sorted(orders):
        ots = sorted(orders[key])
        matched: list[int | None] = [None] * len(ots)
        for r in sorted(returns.get(key, ())):
            for k, o in enumerate(ots):
                if matched[k] is None and o <= r:
                    matched[k] = r
                    break
        out += [(key[0], key[1], o, m) for o, m in zip(ots, matched)]
    return out


def product_stats(matched: Iterable[tuple[str, str, int, int | None]], cutoff_ms: int
                  ) -> dict[str, ProductStats]:
    """Windowed return score: share of a product's orders in the window that
    were returned before the cutoff (0 when the window holds no orders)."""
    acc: dict[str, list[list[int]]] = defaultdict(lambda: [[0, 0] for _ in RETURN_WINDOWS])
    for _, pid, ots, rts in matched:
        for k, (_, days) in enumerate(RETURN_WINDOWS):
            if cutoff_ms - days * DAY_MS <= ots < cutoff_ms:
                acc[pid][k][0] += 1
                acc[pid][k][1] += rts is not None
    return {pid: ProductStats(tuple(r / o if o else 0.0 for o, r in w), tuple(o for o, _ in w))
            for pid, w in sorted(acc.items())}


def user_stats(carts: Iterable[CartRecord], matched: Iterable[tuple[str, str, int, int | None]],
               catalog: Mapping[str, ProductRecord], cutoff_ms: int,
               n_clusters: int = DEFAULT_CLUSTERS, seed: int = 0) -> dict[str, UserStats]:
    """Lifetime aggregates from carts ordered before the cutoff.

    Returns are counted from matched Return events, never from cart labels.
    Users are then clustered with k-means on standardised aggregates.
    """
    per_user: dict[str, list[CartRecord]] = defaultdict(list)
    for c in carts:
        if c.order_timestamp < cutoff_ms:
            per_user[c.user_id].append(c)
    returned = Counter(u for u, _, _, r in matched if r is not None)
    stats = {}
    for user in sorted(per_user):
        cs = sorted(per_user[user], key=lambda c: (c.order_timestamp, c.cart_id))
        qty = sum(c.size for c in cs)
        revenue = sum(sum(catalog[p].mrp for p in c.product_ids if p in catalog) - c.discount
                      for c in cs) / 100.0
        span_days = max((cutoff_ms - cs[0].order_timestamp) / DAY_MS, 30.0)
        tokens = _history_tokens(cs, catalog)
        stats[user] = UserStats(
            order_count=len(cs), quantity=qty, return_count=min(returned[user], qty),
            revenue=revenue,
            cod_share=sum(c.payment_mode is PaymentMode.COD for c in cs) / len(cs),
            purchase_frequency=30.0 * len(cs) / span_days,
            history_tokens=tuple(tokens),
        )
    return assign_clusters(stats, n_clusters, seed)


def _history_tokens(carts: Sequence[CartRecord], catalog: Mapping[str, ProductRecord]) -> list[str]:
    items = sorted((it.cart_add_ts, it.product_id) for c in carts for it in c.items
                   if it.product_id in catalog)
    return [tokenize(catalog[p]) for _, p in items]


def assign_clusters(stats: dict[str, UserStats], n_clusters: int, seed: int) -> dict[str, UserStats]:
    """Seeded k-means on standardised lifetime aggregates."""
    from sklearn.cluster import KMeans

    users = sorted(stats)
    if len(users) < max(n_clusters, 1) or n_clusters < 1:
        return stats
    X = np.array([stats[u].aggregates() for u in users])
    sd = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    labels = KMeans(n_clusters=n_clusters, n_init=10, random_state=seed).fit_predict(X)
    return {u: _with_cluster(stats[u], int(k)) for u, k in zip(users, labels)}


def _with_cluster(s: UserStats, k: int) -> UserStats:
    d = asdict(s)
    d["cluster"] = k
    d["history_tokens"] = tuple(d["history_tokens"])
    return UserStats(**d)


# --------------------------------------------------------------------------
# assembly


def _is_weekend(ts_ms: int) -> bool:
    # 1970-01-01 was a Thursday; weekday 0 = Monday
    return (ts_ms // DAY_MS + 3) % 7 >= 5


def _is_morning(ts_ms: int) -> bool:
    hour = (ts_ms % DAY_MS) // 3_600_000
    return 6 <= hour < 18


@dataclass
class FeatureContext:
    """Everything needed to turn a cart into model inputs; read-only once built."""

    catalog: Mapping[str, ProductRecord]
    encoder: EncoderSpec
    products: Mapping[str, ProductStats]
    users: Mapping[str, UserStats]
    emb: EmbeddingMatrix
    sizing: SkipGramModel
    tau: float = DEFAULT_TAU
    n_clusters: int = DEFAULT_CLUSTERS
    _unit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        U = self.sizing.input_vectors
        n = np.linalg.norm(U, axis=1, keepdims=True)
        self._unit = U / np.where(n > 0, n, 1.0)

    def token_unit(self, pid: str) -> np.ndarray | None:
        p = self.catalog.get(pid)
        if p is None:
            return None
        t = tokenize(p)
        return self._unit[self.sizing.token(t).token_id] if t in self.sizing else None

    def item_vector(self, pid: str) -> np.ndarray | None:
        return self.emb.item_vector(pid) if self.emb.has_item(pid) else None

    def user_vector(self, user: UserStats) -> np.ndarray | None:
        known = [t for t in user.history_tokens if t in self.sizing]
        if not known:
            return None
        return self.sizing.input_vectors[[self.sizing.token(t).token_id for t in known]].mean(axis=0)

    def history_units(self, user: UserStats) -> np.ndarray:
        ids = sorted({self.sizing.token(t).token_id for t in user.history_tokens if t in self.sizing})
        return self._unit[ids] if ids else np.zeros((0, self.sizing.dim))


def _unit(v: np.ndarray | None) -> np.ndarray | None:
    if v is None:
        return None
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else None


class _CartParts:
    """Per-item intermediate values shared by the cart and product vectors."""

    def __init__(self, cart: CartRecord, ctx: FeatureContext):
        if cart.size == 0:
            raise ValueError(f"cart {cart.cart_id} is empty")
        self.ids = cart.product_ids
        self.records = [ctx.catalog.get(p) for p in self.ids]
        self.user = ctx.users.get(cart.user_id) or UserStats()
        self.pstats = [ctx.products.get(p) or ProductStats.empty() for p in self.ids]
        self.bpr = [ctx.item_vector(p) for p in self.ids]
        self.n_similar = similar_counts(self.bpr, ctx.tau)
        self.n_style = n_style_group(self.ids, ctx.catalog)
        self.user_vec = ctx.user_vector(self.user)
        uvec = _unit(self.user_vec)
        hist = ctx.history_units(self.user)
        self.tokens = [ctx.token_unit(p) for p in self.ids]
        self.affinity = [float(t @ uvec) if t is not None and uvec is not None else 0.0
                         for t in self.tokens]
        self.history_match = [float((hist @ t).max()) if t is not None and hist.shape[0] else 0.0
                              for t in self.tokens]


def _item_attrs(rec: ProductRecord | None, enc: EncoderSpec) -> tuple[np.ndarray, np.ndarray, float, float]:
    brand = enc.one_hot("brand", rec.brand if rec else OTHER)
    cat = enc.one_hot("category", rec.category if rec else OTHER)
    return brand, cat, (rec.mrp / 100.0 if rec else 0.0), (float(rec.age_days) if rec else 0.0)


def cart_feature_names(ctx: FeatureContext) -> list[str]:
    enc = ctx.encoder
    names = ["basic:cart_size", "basic:weekend", "basic:morning", "basic:revenue", "basic:discount",
             "basic:mrp_mean", "basic:mrp_max", "basic:age_mean"]
    for col, short in (("delivery_city", "city"), ("platform", "platform"), ("payment_mode", "payment")):
        names += [f"basic:{short}={v}" for v in enc.slots(col)]
    for col in ITEM_COLUMNS:
        names += [f"basic:{col}_share={v}" for v in enc.slots(col)]
    names += ["eng:user_order_count", "eng:user_quantity", "eng:user_return_count",
              "eng:user_return_rate", "eng:user_revenue", "eng:user_cod_share",
              "eng:user_purchase_frequency", "eng:user_cold"]
    names += [f"eng:cluster={k}" for k in range(ctx.n_clusters)] + [f"eng:cluster={OTHER}"]
    for w, _ in RETURN_WINDOWS:
        names += [f"eng:return_score_{w}_mean", f"eng:return_score_{w}_max"]
    names += ["eng:n_style_group_sum", "eng:n_style_group_max"]
    names += [f"bpr:emb_{k}" for k in range(ctx.emb.dim)]
    names += ["bpr:cold_share", "bpr:n_similar_sum", "bpr:n_similar_max"]
    names += [f"size:vec_{k}" for k in range(ctx.sizing.dim)]
    names += ["size:user_cold", "size:token_cold_share", "size:affinity_mean", "size:affinity_min",
              "size:history_match_mean", "size:history_match_min"]
    return names


def _cart_block(cart: CartRecord, ctx: FeatureContext, parts: _CartParts) -> np.ndarray:
    enc = ctx.encoder
    n = len(parts.ids)
    attrs = [_item_attrs(r, enc) for r in parts.records]
    mrp = [a[2] for a in attrs]
    u = parts.user
    cluster = np.zeros(ctx.n_clusters + 1)
    cluster[u.cluster if 0 <= u.cluster < ctx.n_clusters else ctx.n_clusters] = 1.0
    scores = np.array([s.return_scores for s in parts.pstats])
    embedded = [v for v in parts.bpr if v is not None]
    bpr_mean = np.mean(embedded, axis=0) if embedded else np.zeros(ctx.emb.dim)
    user_vec = parts.user_vec if parts.user_vec is not None else np.zeros(ctx.sizing.dim)
    blocks = [
        [n, float(_is_weekend(cart.order_timestamp)), float(_is_morning(cart.order_timestamp)),
         (sum(mrp) * 100.0 - cart.discount) / 100.0, cart.discount / 100.0,
         float(np.mean(mrp)), float(np.max(mrp)), float(np.mean([a[3] for a in attrs]))],
        enc.one_hot("delivery_city", cart.delivery_city),
        enc.one_hot("platform", _cart_value(cart, "platform")),
        enc.one_hot("payment_mode", _cart_value(cart, "payment_mode")),
        np.mean([a[0] for a in attrs], axis=0),
        np.mean([a[1] for a in attrs], axis=0),
        [u.order_count, u.quantity, u.return_count, u.return_rate, u.revenue, u.cod_share,
         u.purchase_frequency, float(u.order_count == 0)],
        cluster,
        np.column_stack([scores.mean(axis=0), scores.max(axis=0)]).ravel(),
        [sum(parts.n_style), max(parts.n_style)],
        bpr_mean,
        [1.0 - len(embedded) / n, sum(parts.n_similar), max(parts.n_similar)],
        user_vec,
        [float(parts.user_vec is None), sum(t is None for t in parts.tokens) / n,
         float(np.mean(parts.affinity)), min(parts.affinity),
         float(np.mean(parts.history_match)), min(parts.history_match)],
    ]
    return np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks])


def assemble_cart_vector(cart: CartRecord, ctx: FeatureContext) -> tuple[np.ndarray, list[str]]:
    """Cart-level input vector and the name of every slot.

    Item-dependent parts are symmetric (means, sums, max, min), so the
    vector does not depend on item order.
    """
    parts = _CartParts(cart, ctx)
    return _cart_block(cart, ctx, parts), cart_feature_names(ctx)


def product_feature_names(ctx: FeatureContext) -> list[str]:
    enc = ctx.encoder
    names = [f"item:brand={v}" for v in enc.slots("brand")]
    names += [f"item:category={v}" for v in enc.slots("category")]
    names += ["item:mrp", "item:age_days"]
    names += [f"item:return_score_{w}" for w, _ in RETURN_WINDOWS]
    names += ["item:n_style_group", "item:n_similar"]
    names += [f"item:bpr_{k}" for k in range(ctx.emb.dim)]
    names += ["item:bpr_cold", "item:token_cold", "item:size_affinity", "item:history_match"]
    return names + [f"cart:{n}" for n in cart_feature_names(ctx)]


def _item_block(ctx: FeatureContext, parts: _CartParts, k: int) -> np.ndarray:
    brand, cat, mrp, age = _item_attrs(parts.records[k], ctx.encoder)
    v = parts.bpr[k]
    blocks = [brand, cat, [mrp, age], parts.pstats[k].return_scores,
              [parts.n_style[k], parts.n_similar[k]],
              v if v is not None else np.zeros(ctx.emb.dim),
              [float(v is None), float(parts.tokens[k] is None), parts.affinity[k],
               parts.history_match[k]]]
    return np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks])


def assemble_product_vector(cart: CartRecord, item_index: int, ctx: FeatureContext
                            ) -> tuple[np.ndarray, list[str]]:
    """Item slices for one cart item followed by the full cart block."""
    parts = _CartParts(cart, ctx)
    if not 0 <= item_index < len(parts.ids):
        raise IndexError(f"item_index {item_index} out of range for cart of {len(parts.ids)}")
    vec = np.concatenate([_item_block(ctx, parts, item_index), _cart_block(cart, ctx, parts)])
    return vec, product_feature_names(ctx)


def assemble_all(cart: CartRecord, ctx: FeatureContext) -> tuple[np.ndarray, np.ndarray]:
    """Cart vector and the stacked product vectors of every item, sharing one pass."""
    parts = _CartParts(cart, ctx)
    block = _cart_block(cart, ctx, parts)
    items = np.array([np.concatenate([_item_block(ctx, parts, k), block])
                      for k in range(len(parts.ids))])
    return block, items


def manifest_hash(names: Sequence[str]) -> str:
    return hashlib.sha256(json.dumps(list(names)).encode()).hexdigest()
