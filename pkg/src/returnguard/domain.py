"""Catalog, clickstream and cart records plus dataset validation.

All timestamps are epoch milliseconds (UTC). Money is integer minor units.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class Gender(str, Enum):
    MEN = "Men"
    WOMEN = "Women"
    UNISEX = "Unisex"


class EventKind(str, Enum):
    VIEW = "View"
    CLICK = "Click"
    CART_ADD = "CartAdd"
    ORDER = "Order"
    RETURN = "Return"


class Platform(str, Enum):
    APP = "App"
    WEB = "Web"


class PaymentMode(str, Enum):
    PREPAID = "Prepaid"
    COD = "CashOnDelivery"


class DatasetReadError(OSError):
    """Input file could not be opened or read."""


class DatasetParseError(ValueError):
    """A record is syntactically malformed (bad JSON, missing field, bad enum)."""


@dataclass(frozen=True, slots=True)
class ProductRecord:
    product_id: str
    brand: str
    gender: Gender
    category: str
    usage: str
    size: str
    color: str
    style_group_id: str
    mrp: int
    age_days: int
    returnable_flag: bool = True

    def to_json(self) -> dict:
        return {
            "product_id": self.product_id,
            "brand": self.brand,
            "gender": self.gender.value,
            "category": self.category,
            "usage": self.usage,
            "size": self.size,
            "color": self.color,
            "style_group_id": self.style_group_id,
            "mrp": self.mrp,
            "age_days": self.age_days,
            "returnable_flag": self.returnable_flag,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ProductRecord":
        return cls(
            product_id=_str(d, "product_id"),
            brand=_str(d, "brand"),
            gender=_enum(Gender, d, "gender"),
            category=_str(d, "category"),
            usage=_str(d, "usage"),
            size=_str(d, "size"),
            color=_str(d, "color"),
            style_group_id=_str(d, "style_group_id"),
            mrp=_int(d, "mrp"),
            age_days=_int(d, "age_days"),
            returnable_flag=_bool(d, "returnable_flag", default=True),
        )


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    user_id: str
    product_id: str
    kind: EventKind
    timestamp: int

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "product_id": self.product_id,
            "kind": self.kind.value,
            "ts": self.timestamp,
        }

    @classmethod
    def from_json(cls, d: dict) -> "InteractionEvent":
        return cls(
            user_id=_str(d, "user_id"),
            product_id=_str(d, "product_id"),
            kind=_enum(EventKind, d, "kind"),
            timestamp=_int(d, "ts"),
        )


@dataclass(frozen=True, slots=True)
class CartItem:
    product_id: str
    cart_add_ts: int


@dataclass(frozen=True, slots=True)
class CartRecord:
    cart_id: str
    user_id: str
    items: tuple[CartItem, ...]
    delivery_city: str
    platform: Platform
    order_timestamp: int
    payment_mode: PaymentMode
    per_item_returned: tuple[bool, ...] | None = None
    discount: int = 0

    @property
    def size(self) -> int:
        return len(self.items)

    @property
    def product_ids(self) -> list[str]:
        return [it.product_id for it in self.items]

    @property
    def returned(self) -> bool:
        """Cart-level label: any item returned."""
        if self.per_item_returned is None:
            raise ValueError(f"cart {self.cart_id} carries no labels")
        return any(self.per_item_returned)

    def unlabeled(self) -> "CartRecord":
        return CartRecord(self.cart_id, self.user_id, self.items, self.delivery_city,
                          self.platform, self.order_timestamp, self.payment_mode,
                          None, self.discount)

    def to_json(self) -> dict:
        d = {
            "cart_id": self.cart_id,
            "user_id": self.user_id,
            "items": [{"product_id": it.product_id, "cart_add_ts": it.cart_add_ts}
                      for it in self.items],
            "delivery_city": self.delivery_city,
            "platform": self.platform.value,
            "order_timestamp": self.order_timestamp,
            "payment_mode": self.payment_mode.value,
            "discount": self.discount,
        }
        if self.per_item_returned is not None:
            d["per_item_returned"] = list(self.per_item_returned)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CartRecord":
        raw_items = d.get("items")
        if not isinstance(raw_items, list):
            raise DatasetParseError("cart field 'items' must be a list")
        items = tuple(CartItem(_str(it, "product_id"), _int(it, "cart_add_ts")) for it in raw_items)
        labels = d.get("per_item_returned")
        if labels is not None:
            if not isinstance(labels, list) or not all(isinstance(x, bool) for x in labels):
                raise DatasetParseError("per_item_returned must be a list of booleans")
            labels = tuple(labels)
        return cls(
            cart_id=_str(d, "cart_id"),
            user_id=_str(d, "user_id"),
            items=items,
            delivery_city=_str(d, "delivery_city"),
            platform=_enum(Platform, d, "platform"),
            order_timestamp=_int(d, "order_timestamp"),
            payment_mode=_enum(PaymentMode, d, "payment_mode"),
            per_item_returned=labels,
            discount=_int(d, "discount", default=0),
        )


def _str(d: dict, key: str) -> str:
    v = d.get(key)
    if not isinstance(v, str):
        raise DatasetParseError(f"field {key!r} must be a string, got {v!r}")
    return v


def _int(d: dict, key: str, default: int | None = None) -> int:
    if key not in d and default is not None:
        return default
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise DatasetParseError(f"field {key!r} must be an integer, got {v!r}")
    return v


def _bool(d: dict, key: str, default: bool | None = None) -> bool:
    if key not in d and default is not None:
        return default
    v = d.get(key)
    if not isinstance(v, bool):
        raise DatasetParseError(f"field {key!r} must be a boolean, got {v!r}")
    return v


def _enum(enum_cls, d: dict, key: str):
    v = d.get(key)
    try:
        return enum_cls(v)
    except ValueError:
        raise DatasetParseError(f"field {key!r}: {v!r} is not a valid {enum_cls.__name__}") from None


# --------------------------------------------------------------------------
# JSON Lines I/O


def write_jsonl(path: str | Path, records: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            d = r.to_json() if hasattr(r, "to_json") else r
            fh.write(json.dumps(d, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DatasetReadError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(obj, dict):
                raise DatasetParseError(f"{path}:{lineno}: expected a JSON object")
            yield obj


def read_catalog(path: str | Path) -> list[ProductRecord]:
    return [ProductRecord.from_json(d) for d in iter_jsonl(path)]


def read_events(path: str | Path) -> list[InteractionEvent]:
    return [InteractionEvent.from_json(d) for d in iter_jsonl(path)]


def read_carts(path: str | Path) -> list[CartRecord]:
    return [CartRecord.from_json(d) for d in iter_jsonl(path)]


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


@dataclass
class ValidationReport:
    counts: dict[str, int] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> Counter:
        return Counter(v.kind for v in self.violations)

    def to_json(self) -> dict:
        return {
            "counts": dict(sorted(self.counts.items())),
            "violations": [{"kind": v.kind, "detail": v.detail} for v in self.violations],
        }


def validate_dataset(
    events: Iterable[InteractionEvent],
    catalog: Iterable[ProductRecord],
    carts: Iterable[CartRecord],
) -> ValidationReport:
    """Check referential and record invariants across the three inputs.

    Violations are reported, never raised. The result does not depend on the
    order of ``events`` as long as timestamps are distinct.
    """
    catalog = list(catalog)
    events = list(events)
    carts = list(carts)
    violations: list[Violation] = []

    products: dict[str, ProductRecord] = {}
    for p in catalog:
        if p.product_id in products:
            violations.append(Violation("DuplicateProduct", p.product_id))
        products[p.product_id] = p
        if p.mrp <= 0:
            violations.append(Violation("NonPositiveMrp", p.product_id))
        if p.age_days < 0:
            violations.append(Violation("NegativeAge", p.product_id))

    groups: dict[str, ProductRecord] = {}
    for pid in sorted(products):
        p = products[pid]
        first = groups.setdefault(p.style_group_id, p)
        if first is not p and _style_key(first) != _style_key(p):
            violations.append(Violation(
                "StyleGroupMismatch", f"{p.product_id} vs {first.product_id} in {p.style_group_id}"))

    # Each Return consumes one earlier Order of the same (user, product) pair.
    open_orders: dict[tuple[str, str], int] = defaultdict(int)
    kind_rank = {EventKind.ORDER: 0}
    ordered = sorted(events, key=lambda e: (e.timestamp, kind_rank.get(e.kind, 1),
                                            e.user_id, e.product_id, e.kind.value))
    for e in ordered:
        if e.product_id not in products:
            violations.append(Violation("UnknownProduct", f"event {e.user_id}/{e.product_id}"))
        pair = (e.user_id, e.product_id)
        if e.kind is EventKind.ORDER:
            open_orders[pair] += 1
        elif e.kind is EventKind.RETURN:
            if open_orders[pair] > 0:
                open_orders[pair] -= 1
            else:
                violations.append(Violation(
                    "ReturnWithoutOrder", f"user={e.user_id} product={e.product_id} ts={e.timestamp}"))

    for c in carts:
        if not c.items:
            violations.append(Violation("EmptyCart", c.cart_id))
        for it in c.items:
            if it.product_id not in products:
                violations.append(Violation("UnknownProduct", f"cart {c.cart_id}/{it.product_id}"))
        if c.per_item_returned is not None and len(c.per_item_returned) != len(c.items):
            violations.append(Violation(
                "LabelLengthMismatch",
                f"cart {c.cart_id}: {len(c.per_item_returned)} labels for {len(c.items)} items"))

    kinds = Counter(e.kind for e in events)
    counts = {
        "products": len(catalog),
        "events": len(events),
        "carts": len(carts),
        "users": len({e.user_id for e in events} | {c.user_id for c in carts}),
        "cart_items": sum(len(c.items) for c in carts),
        "labeled_carts": sum(c.per_item_returned is not None for c in carts),
    }
    for k in EventKind:
        counts[f"events_{k.value}"] = kinds.get(k, 0)
    violations.sort(key=lambda v: (v.kind, v.detail))
    return ValidationReport(counts=counts, violations=violations)


def _style_key(p: ProductRecord) -> tuple:
    return (p.brand, p.gender, p.category, p.usage, p.size, p.mrp, p.age_days, p.returnable_flag)
