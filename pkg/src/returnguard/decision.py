"""Threshold rules that turn return probabilities into preemptive actions."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Sequence


class Segment(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


@dataclass(frozen=True)
class ActionPolicy:
    low_max: float = 0.4
    med_max: float = 0.7
    delivery_charge_threshold: float = 0.77
    min_charge: int = 0
    max_charge: int = 149
    nonreturnable_item_threshold: float = 0.7
    coupon_value: int = 100
    try_and_buy_enabled: bool = True
    # cart probability at or above which the item-level model is consulted
    item_model_threshold: float = 0.5
    # optional actions, off by default
    restrict_payment_enabled: bool = False
    out_of_stock_enabled: bool = False
    out_of_stock_item_threshold: float = 0.9

    def __post_init__(self):
        if not 0 < self.low_max < self.med_max < 1:
            raise ValueError("need 0 < low_max < med_max < 1")
        if self.min_charge > self.max_charge:
            raise ValueError("min_charge must not exceed max_charge")
        for name in ("delivery_charge_threshold", "nonreturnable_item_threshold",
                     "item_model_threshold", "out_of_stock_item_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.delivery_charge_threshold >= 1:
            raise ValueError("delivery_charge_threshold must be below 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ActionPolicy":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy fields: {sorted(unknown)}")
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ActionPolicy":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Action:
    kind: str  # None, DeliveryCharge, TryAndBuyOffer, NonReturnableCoupon, ...
    amount: int | None = None

    def to_json(self) -> dict:
        return {"kind": self.kind} if self.amount is None else {"kind": self.kind, "amount": self.amount}


NO_ACTION = Action("None")


@dataclass(frozen=True)
class Decision:
    segment: Segment
    cart_action: Action
    item_actions: tuple[Action, ...]
    extra_actions: tuple[Action, ...] = ()

    @property
    def delivery_charge(self) -> int:
        return self.cart_action.amount if self.cart_action.kind == "DeliveryCharge" else 0

    def to_json(self) -> dict:
        return {"segment": self.segment.value, "cart_action": self.cart_action.to_json(),
                "item_actions": [a.to_json() for a in self.item_actions],
                "extra_actions": [a.to_json() for a in self.extra_actions]}


def _check_prob(p: float, what: str) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{what} must lie in [0, 1], got {p}")
    return p


def segment(p: float, policy: ActionPolicy = ActionPolicy()) -> Segment:
    """Boundary values belong to the lower segment."""
    p = _check_prob(p, "probability")
    if p <= policy.low_max:
        return Segment.LOW
    if p <= policy.med_max:
        return Segment.MEDIUM
    return Segment.HIGH


def _round_half_up(x: float) -> int:
    # the epsilon absorbs representation error such as 0.4999999999999999
    return int(math.floor(x + 0.5 + 1e-9))


def delivery_charge(cart_p: float, policy: ActionPolicy = ActionPolicy()) -> int:
    """0 at or below the threshold, otherwise linear from min to max charge."""
    cart_p = _check_prob(cart_p, "cart probability")
    t = policy.delivery_charge_threshold
    if not cart_p > t:
        return 0
    span = policy.max_charge - policy.min_charge
    amount = policy.min_charge + _round_half_up((cart_p - t) / (1.0 - t) * span)
    return min(policy.max_charge, max(policy.min_charge, amount))


def decide(cart_p: float, item_ps: Sequence[float | None], policy: ActionPolicy = ActionPolicy()
           ) -> Decision:
    """Cart action, per-item actions and optional extras.

    An item probability of ``None`` (item model not consulted) never
    triggers an item action.
    """
    seg = segment(cart_p, policy)
    charged = cart_p > policy.delivery_charge_threshold
    if charged:
        cart_action = Action("DeliveryCharge", delivery_charge(cart_p, policy))
    elif policy.try_and_buy_enabled and seg is Segment.HIGH:
        cart_action = Action("TryAndBuyOffer")
    else:
        cart_action = NO_ACTION
    items = []
    for k, p in enumerate(item_ps):
        if p is None:
            items.append(NO_ACTION)
            continue
        p = _check_prob(p, f"item probability {k}")
        if policy.out_of_stock_enabled and p > policy.out_of_stock_item_threshold:
            items.append(Action("ShowOutOfStock"))
        elif p > policy.nonreturnable_item_threshold:
            items.append(Action("NonReturnableCoupon", policy.coupon_value))
        else:
            items.append(NO_ACTION)
    extras = (Action("RestrictPaymentOptions"),) if (
        policy.restrict_payment_enabled and seg is Segment.HIGH) else ()
    return Decision(seg, cart_action, tuple(items), extras)
