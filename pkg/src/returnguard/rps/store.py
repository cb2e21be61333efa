"""Offline feature store: per-user and per-product aggregates at a cutoff."""
from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

from ..domain import CartItem, CartRecord, EventKind, InteractionEvent, PaymentMode, Platform, ProductRecord
from ..features import (DEFAULT_CLUSTERS, ProductStats, UserStats, match_returns, product_stats,
                        user_stats)

STORE_VERSION = 1


@dataclass(frozen=True)
class FeatureStore:
    cutoff_ms: int
    products: dict[str, ProductStats]
    users: dict[str, UserStats]
    n_clusters: int = DEFAULT_CLUSTERS
    seed: int = 0

    def user(self, user_id: str) -> UserStats:
        """Known user's aggregates, or all-zero defaults with no cluster."""
        return self.users.get(user_id) or UserStats()

    def product(self, product_id: str) -> ProductStats:
        return self.products.get(product_id) or ProductStats.empty()

    def to_json(self) -> dict:
        return {
            "version": STORE_VERSION,
            "cutoff_ms": self.cutoff_ms,
            "n_clusters": self.n_clusters,
            "seed": self.seed,
            "products": {p: {"return_scores": list(s.return_scores), "orders": list(s.orders)}
                         for p, s in sorted(self.products.items())},
            "users": {u: {**asdict(s), "history_tokens": list(s.history_tokens)}
                      for u, s in sorted(self.users.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> "FeatureStore":
        if d.get("version") != STORE_VERSION:
            raise ValueError(f"unsupported feature store version {d.get('version')}")
        products = {p: ProductStats(tuple(v["return_scores"]), tuple(v["orders"]))
                    for p, v in d["products"].items()}
        users = {u: UserStats(**{**v, "history_tokens": tuple(v["history_tokens"])})
                 for u, v in d["users"].items()}
        return cls(d["cutoff_ms"], products, users, d["n_clusters"], d["seed"])

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.canonical_bytes() + b"\n")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureStore":
        return cls.from_json(json.loads(Path(path).read_text()))


def _orders_as_carts(events: Iterable[InteractionEvent]) -> list[CartRecord]:
    # without cart records an order is the set of items a user ordered at one instant;
    # payment mode is unknown and recorded as prepaid
    groups: dict[tuple[str, int], list[str]] = defaultdict(list)
    for e in events:
        if e.kind is EventKind.ORDER:
            groups[(e.user_id, e.timestamp)].append(e.product_id)
    return [CartRecord(f"order-{u}-{ts}", u, tuple(CartItem(p, ts) for p in sorted(pids)), "",
                       Platform.APP, ts, PaymentMode.PREPAID)
            for (u, ts), pids in sorted(groups.items())]


def build_store(events: Iterable[InteractionEvent], catalog: Mapping[str, ProductRecord] | list,
                cutoff_ms: int, carts: Iterable[CartRecord] | None = None,
                n_clusters: int = DEFAULT_CLUSTERS, seed: int = 0) -> FeatureStore:
    """Aggregates from events (and carts, when given) strictly before ``cutoff_ms``."""
    if not isinstance(catalog, Mapping):
        catalog = {p.product_id: p for p in catalog}
    events = [e for e in events if e.timestamp < cutoff_ms]
    matched = match_returns(events, cutoff_ms)
    history = _orders_as_carts(events) if carts is None else [
        c for c in carts if c.order_timestamp < cutoff_ms]
    return FeatureStore(
        cutoff_ms=cutoff_ms,
        products=product_stats(matched, cutoff_ms),
        users=user_stats(history, matched, catalog, cutoff_ms, n_clusters, seed),
        n_clusters=n_clusters,
        seed=seed,
    )
