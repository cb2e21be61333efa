"""Deterministic synthetic catalog / clickstream / cart generator.

The generator plants the return drivers we want downstream models to find:

* every user has a latent true size per (brand, category); buying another
  size triggers an independent size-fit return hazard,
* carts holding two products of the same latent style archetype get an extra
  return hazard (the "similar items" effect),
* a cart-size curve, per-user and per-design return propensity, payment mode,
  product age and order time scale a base return hazard.

Each returned item records which mechanism fired first, so the share of
returns due to size and fit is an exact count rather than an estimate.
"""
from __future__ import annotations

import bisect
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    CartItem,
    CartRecord,
    EventKind,
    Gender,
    InteractionEvent,
    PaymentMode,
    Platform,
    ProductRecord,
    iter_jsonl,
    write_jsonl,
)

DAY_MS = 86_400_000
HOUR_MS = 3_600_000
MINUTE_MS = 60_000
EPOCH_START_MS = 1_672_531_200_000  # 2023-01-01T00:00:00Z

BRANDS = ("Nike", "Adidas", "Puma", "Roadster", "Mango")
CATEGORIES: dict[str, dict] = {
    "Shoes": {"sizes": ("6", "7", "8", "9", "10", "11"), "usages": ("Sports", "Casual"),
              "genders": (Gender.MEN, Gender.WOMEN), "mrp": 299_900},
    "Jeans": {"sizes": ("28", "30", "32", "34", "36"), "usages": ("Casual", "Party"),
              "genders": (Gender.MEN, Gender.WOMEN), "mrp": 199_900},
    "Tshirts": {"sizes": ("S", "M", "L", "XL", "XXL"), "usages": ("Sports", "Casual"),
                "genders": (Gender.MEN, Gender.WOMEN), "mrp": 79_900},
    "Shirts": {"sizes": ("S", "M", "L", "XL", "XXL"), "usages": ("Casual", "Formal"),
               "genders": (Gender.MEN,), "mrp": 129_900},
    "Dresses": {"sizes": ("XS", "S", "M", "L", "XL"), "usages": ("Casual", "Party"),
                "genders": (Gender.WOMEN,), "mrp": 159_900},
}
COLORS = ("Black", "White", "Navy", "Red", "Olive", "Grey")
CITIES = ("Bengaluru", "Mumbai", "Delhi", "Hyderabad", "Chennai", "Pune", "Kolkata",
          "Ahmedabad", "Jaipur", "Lucknow", "Kochi", "Indore")
ARCHETYPES_PER_BRAND = 2
AGED_DAYS = 365


def size_index(category: str, size: str) -> int:
    """Position of ``size`` on the category's ordered size scale."""
    return CATEGORIES[category]["sizes"].index(size)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 42
    n_users: int = 2000
    n_products: int = 1500
    n_carts: int = 24000
    size_mismatch_return_prob: float = 0.6
    base_return_prob: float = 0.0155
    similar_item_boost: float = 0.015
    # multiplier for cart sizes 1, 2, ...; sizes past the end reuse the last entry
    cart_size_curve: tuple[float, ...] = (1.0, 2.0, 3.1, 4.1, 4.8, 5.0, 5.0, 5.0, 5.0, 5.0)
    cart_size_probs: tuple[float, ...] = (0.34, 0.22, 0.14, 0.10, 0.07, 0.05, 0.035, 0.025,
                                          0.012, 0.008)
    mismatch_rate: float = 0.115
    color_variant_rate: float = 0.023
    archetype_focus: float = 0.85
    category_concentration: float = 1.0
    browse_mean: float = 4.0
    n_days: int = 365
    history_fraction: float = 0.6

    def __post_init__(self):
        for name in ("size_mismatch_return_prob", "base_return_prob", "similar_item_boost",
                     "mismatch_rate", "color_variant_rate", "history_fraction", "archetype_focus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        for name in ("n_users", "n_products", "n_carts", "n_days"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        curve = self.cart_size_curve
        if not curve or any(b < a for a, b in zip(curve, curve[1:])) or curve[0] < 0:
            raise ValueError("cart_size_curve must be non-empty, non-negative and non-decreasing")
        if not math.isclose(sum(self.cart_size_probs), 1.0, abs_tol=1e-9):
            raise ValueError("cart_size_probs must sum to 1")

    def curve(self, n: int) -> float:
        return self.cart_size_curve[min(n, len(self.cart_size_curve)) - 1]

    @property
    def cutoff_ms(self) -> int:
        """Start of the modelling window; history before it feeds features."""
        return EPOCH_START_MS + int(self.history_fraction * self.n_days) * DAY_MS

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        for k in ("cart_size_curve", "cart_size_probs"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class ItemTruth:
    size_mismatch: bool
    has_similar: bool
    color_variant: bool
    reason: str | None  # size_fit / color_variant / similar / other, None if kept


@dataclass
class GroundTruth:
    cutoff_ms: int
    product_archetype: dict[str, int] = field(default_factory=dict)
    user_sizes: dict[str, dict[str, str]] = field(default_factory=dict)  # user -> "brand|category" -> size
    cart_items: dict[str, list[ItemTruth]] = field(default_factory=dict)

    def to_lines(self) -> list[dict]:
        lines: list[dict] = [{"kind": "meta", "cutoff_ms": self.cutoff_ms}]
        for pid, a in self.product_archetype.items():
            lines.append({"kind": "product", "product_id": pid, "archetype": a})
        for uid, sizes in self.user_sizes.items():
            lines.append({"kind": "user", "user_id": uid, "sizes": sizes})
        for cid, items in self.cart_items.items():
            lines.append({"kind": "cart", "cart_id": cid, "items": [asdict(t) for t in items]})
        return lines

    @classmethod
    def from_lines(cls, lines) -> "GroundTruth":
        gt = cls(cutoff_ms=0)
        for d in lines:
            k = d["kind"]
            if k == "meta":
                gt.cutoff_ms = d["cutoff_ms"]
            elif k == "product":
                gt.product_archetype[d["product_id"]] = d["archetype"]
            elif k == "user":
                gt.user_sizes[d["user_id"]] = d["sizes"]
            elif k == "cart":
                gt.cart_items[d["cart_id"]] = [ItemTruth(**t) for t in d["items"]]
        return gt


@dataclass
class Dataset:
    catalog: list[ProductRecord]
    events: list[InteractionEvent]
    carts: list[CartRecord]
    truth: GroundTruth


@dataclass
class _Design:
    design_id: int
    brand: str
    gender: Gender
    category: str
    usage: str
    archetype: int
    colors: tuple[str, ...]
    mrp: int
    age_days: int
    return_mult: float
    products: dict[tuple[str, str], str] = field(default_factory=dict)  # (size, color) -> pid


@dataclass
class _User:
    user_id: str
    gender: Gender
    true_size: dict[tuple[str, str], int]
    archetype_cum: list[float]
    archetypes: list[int]
    category_cum: list[float]
    categories: list[str]
    mismatch: float
    return_mult: float
    cod_prob: float
    app_prob: float
    city: str


def _cum(weights) -> list[float]:
    c = np.cumsum(np.asarray(weights, dtype=float))
    return list(c / c[-1])


def _pick(rng: np.random.Generator, cum: list[float]) -> int:
    return min(bisect.bisect_right(cum, rng.random()), len(cum) - 1)


def _lognormal_mean1(rng: np.random.Generator, sigma: float, size=None):
    return rng.lognormal(-0.5 * sigma * sigma, sigma, size)


def generate(config: GenConfig) -> Dataset:
    """Build (catalog, events, carts) plus the ground-truth sidecar.

    A pure function of ``config``: identical configs give identical records.
    The catalog size tracks ``n_products`` to within one design's worth of
    size/color variants.
    """
    rng = np.random.default_rng(config.seed)
    designs, catalog = _make_catalog(config, rng)
    users = _make_users(config, rng)
    by_pid = {p.product_id: p for p in catalog}
    design_of = {pid: d for d in designs for pid in d.products.values()}

    # selection tables: (gender, archetype, category) -> designs with popularity
    groups: dict[tuple, list[_Design]] = defaultdict(list)
    arche_groups: dict[tuple, list[_Design]] = defaultdict(list)
    for d in designs:
        groups[(d.gender, d.archetype, d.category)].append(d)
        arche_groups[(d.gender, d.archetype)].append(d)
    perm = rng.permutation(len(designs))
    popularity = {designs[i].design_id: 1.0 / (r + 1) ** 0.8 for r, i in enumerate(perm)}
    group_cum = {k: (v, _cum([popularity[d.design_id] for d in v])) for k, v in groups.items()}
    arche_cum = {k: (v, _cum([popularity[d.design_id] for d in v])) for k, v in arche_groups.items()}

    def draw_design(u: _User) -> _Design:
        a = u.archetypes[_pick(rng, u.archetype_cum)]
        cat = u.categories[_pick(rng, u.category_cum)]
        entry = group_cum.get((u.gender, a, cat)) or arche_cum.get((u.gender, a))
        if entry is None:
            entry = next(iter(arche_cum.values()))
        ds, cum = entry
        return ds[_pick(rng, cum)]

    def sized(u: _User, d: _Design, allow_mismatch: bool) -> tuple[str, bool]:
        scale = CATEGORIES[d.category]["sizes"]
        true_idx = u.true_size[(d.brand, d.category)]
        idx = true_idx
        if allow_mismatch and rng.random() < u.mismatch:
            step = 1 if rng.random() < 0.5 else -1
            idx = true_idx + step
            if not 0 <= idx < len(scale):
                idx = true_idx - step
        return scale[idx], idx != true_idx

    activity = _lognormal_mean1(rng, 0.8, len(users))
    user_cum = _cum(activity)
    size_cum = _cum(config.cart_size_probs)
    order_times = np.sort(rng.integers(EPOCH_START_MS, EPOCH_START_MS + config.n_days * DAY_MS,
                                       size=config.n_carts))

    events: list[InteractionEvent] = []
    carts: list[CartRecord] = []
    truth = GroundTruth(cutoff_ms=config.cutoff_ms)
    truth.product_archetype = {pid: design_of[pid].archetype for pid in by_pid}
    truth.user_sizes = {
        u.user_id: {f"{b}|{c}": CATEGORIES[c]["sizes"][i] for (b, c), i in sorted(u.true_size.items())}
        for u in users
    }

    for ci in range(config.n_carts):
        u = users[_pick(rng, user_cum)]
        order_ts = int(order_times[ci])
        n = _pick(rng, size_cum) + 1
        chosen: list[tuple[str, bool]] = []  # (pid, mismatch)
        used: set[str] = set()
        attempts = 0
        while len(chosen) < n and attempts < 20 * n:
            attempts += 1
            d = draw_design(u)
            size, mismatch = sized(u, d, allow_mismatch=True)
            color = d.colors[int(rng.integers(len(d.colors)))]
            pid = d.products.get((size, color))
            if pid is None or pid in used:
                continue
            # one color-variant pair per cart at most
            if any(design_of[p] is d and by_pid[p].size == size for p, _ in chosen):
                continue
            used.add(pid)
            chosen.append((pid, mismatch))
        if len(chosen) >= 2 and rng.random() < config.color_variant_rate:
            candidates = [k for k, (p, _) in enumerate(chosen) if len(design_of[p].colors) > 1]
            if candidates:
                k = candidates[int(rng.integers(len(candidates)))]
                p0, mm0 = chosen[k]
                d0, rec0 = design_of[p0], by_pid[p0]
                other = [c for c in d0.colors if c != rec0.color]
                color = other[int(rng.integers(len(other)))]
                pid = d0.products[(rec0.size, color)]
                if pid not in used:
                    repl = len(chosen) - 1 if k != len(chosen) - 1 else 0
                    used.discard(chosen[repl][0])
                    chosen[repl] = (pid, mm0)
                    used.add(pid)
        n = len(chosen)

        weekend = _is_weekend(order_ts)
        evening = not _is_morning(order_ts)
        cod = rng.random() < u.cod_prob
        platform = Platform.APP if rng.random() < u.app_prob else Platform.WEB
        cart_mult = config.curve(n) * u.return_mult * (1.3 if cod else 0.8)
        cart_mult *= (1.15 if weekend else 1.0) * (1.1 if evening else 1.0)

        archetypes = [design_of[p].archetype for p, _ in chosen]
        styles = [by_pid[p].style_group_id for p, _ in chosen]
        add_offsets = np.sort(rng.integers(MINUTE_MS, 3 * HOUR_MS, size=n))[::-1]
        items: list[CartItem] = []
        labels: list[bool] = []
        item_truth: list[ItemTruth] = []
        for k, (pid, mismatch) in enumerate(chosen):
            d = design_of[pid]
            has_similar = archetypes.count(archetypes[k]) > 1
            color_variant = styles.count(styles[k]) > 1
            a = config.size_mismatch_return_prob if mismatch else 0.0
            b = config.similar_item_boost if has_similar else 0.0
            age_mult = 1.5 if d.age_days > AGED_DAYS else 0.75
            c = min(0.95, config.base_return_prob * cart_mult * d.return_mult * age_mult)
            fa, fb, fc = rng.random() < a, rng.random() < b, rng.random() < c
            reason = None
            if fa:
                reason = "size_fit"
            elif fb:
                reason = "color_variant" if color_variant else "similar"
            elif fc:
                reason = "other"
            returned = reason is not None
            add_ts = order_ts - int(add_offsets[k])
            items.append(CartItem(pid, add_ts))
            labels.append(returned)
            item_truth.append(ItemTruth(mismatch, has_similar, color_variant, reason))

            view_ts = add_ts - int(rng.integers(MINUTE_MS, 30 * MINUTE_MS))
            events.append(InteractionEvent(u.user_id, pid, EventKind.VIEW, view_ts))
            if rng.random() < 0.3:
                events.append(InteractionEvent(u.user_id, pid, EventKind.VIEW,
                                               view_ts - int(rng.integers(MINUTE_MS, DAY_MS))))
            events.append(InteractionEvent(u.user_id, pid, EventKind.CLICK,
                                           add_ts - int(rng.integers(1000, MINUTE_MS))))
            events.append(InteractionEvent(u.user_id, pid, EventKind.CART_ADD, add_ts))
            events.append(InteractionEvent(u.user_id, pid, EventKind.ORDER, order_ts))
            if returned:
                events.append(InteractionEvent(u.user_id, pid, EventKind.RETURN,
                                               order_ts + int(rng.integers(2 * DAY_MS, 20 * DAY_MS))))

        for _ in range(int(rng.poisson(config.browse_mean))):
            d = draw_design(u)
            size, _ = sized(u, d, allow_mismatch=False)
            pid = d.products.get((size, d.colors[int(rng.integers(len(d.colors)))]))
            if pid is None or pid in used:
                continue
            ts = order_ts - int(rng.integers(5 * MINUTE_MS, 4 * HOUR_MS))
            events.append(InteractionEvent(u.user_id, pid, EventKind.VIEW, ts))
            if rng.random() < 0.35:
                events.append(InteractionEvent(u.user_id, pid, EventKind.CLICK, ts + 30_000))
                if rng.random() < 0.25:
                    events.append(InteractionEvent(u.user_id, pid, EventKind.CART_ADD, ts + 90_000))

        cart_id = f"C{ci:07d}"
        discount = int(sum(by_pid[p].mrp for p, _ in chosen) * float(rng.choice((0.0, 0.1, 0.2, 0.3))))
        carts.append(CartRecord(
            cart_id=cart_id, user_id=u.user_id, items=tuple(items), delivery_city=u.city,
            platform=platform, order_timestamp=order_ts,
            payment_mode=PaymentMode.COD if cod else PaymentMode.PREPAID,
            per_item_returned=tuple(labels), discount=discount))
        truth.cart_items[cart_id] = item_truth

    kind_rank = {EventKind.VIEW: 0, EventKind.CLICK: 1, EventKind.CART_ADD: 2,
                 EventKind.ORDER: 3, EventKind.RETURN: 4}
    events.sort(key=lambda e: (e.timestamp, e.user_id, e.product_id, kind_rank[e.kind]))
    return Dataset(catalog=catalog, events=events, carts=carts, truth=truth)


def _make_catalog(config: GenConfig, rng: np.random.Generator):
    combos = []
    archetype = 0
    for brand in BRANDS:
        for gender in (Gender.MEN, Gender.WOMEN):
            for _ in range(ARCHETYPES_PER_BRAND):
                for cat, spec in CATEGORIES.items():
                    if gender not in spec["genders"]:
                        continue
                    for usage in spec["usages"]:
                        combos.append((brand, gender, cat, usage, archetype))
                archetype += 1
    brand_mult = {b: m for b, m in zip(BRANDS, (1.3, 1.2, 1.0, 0.7, 0.9))}

    designs: list[_Design] = []
    catalog: list[ProductRecord] = []
    order = list(rng.permutation(len(combos)))
    k = 0
    while len(catalog) < config.n_products:
        if k == len(order):
            order += list(rng.permutation(len(combos)))
        brand, gender, cat, usage, arch = combos[order[k]]
        k += 1
        n_colors = int(rng.choice((1, 2, 3), p=(0.5, 0.3, 0.2)))
        colors = tuple(sorted(rng.choice(len(COLORS), size=n_colors, replace=False)))
        d = _Design(
            design_id=len(designs), brand=brand, gender=gender, category=cat, usage=usage,
            archetype=arch, colors=tuple(COLORS[c] for c in colors),
            mrp=int(round(CATEGORIES[cat]["mrp"] * brand_mult[brand] * rng.uniform(0.7, 1.4), -2)),
            age_days=int(rng.integers(0, 2 * AGED_DAYS)),
            return_mult=float(_lognormal_mean1(rng, 0.5)),
        )
        for size in CATEGORIES[cat]["sizes"]:
            for color in d.colors:
                pid = f"P{len(catalog):05d}"
                d.products[(size, color)] = pid
                catalog.append(ProductRecord(
                    product_id=pid, brand=brand, gender=gender, category=cat, usage=usage,
                    size=size, color=color, style_group_id=f"S{d.design_id:04d}-{size}",
                    mrp=d.mrp, age_days=d.age_days, returnable_flag=True))
        designs.append(d)
    return designs, catalog


def _make_users(config: GenConfig, rng: np.random.Generator) -> list[_User]:
    # brand fit offsets per (brand, category): runs small / true / large
    offsets = {(b, c): int(rng.choice((-1, 0, 1), p=(0.25, 0.5, 0.25)))
               for b in BRANDS for c in CATEGORIES}
    n_arch_per_gender = len(BRANDS) * ARCHETYPES_PER_BRAND
    m, conc = config.mismatch_rate, 6.0
    users = []
    for i in range(config.n_users):
        gender = Gender.MEN if rng.random() < 0.5 else Gender.WOMEN
        g_off = 0 if gender is Gender.MEN else 1
        archetypes = [b * 2 * ARCHETYPES_PER_BRAND + g_off * ARCHETYPES_PER_BRAND + j
                      for b in range(len(BRANDS)) for j in range(ARCHETYPES_PER_BRAND)]
        cats = [c for c, s in CATEGORIES.items() if gender in s["genders"]]
        body = rng.normal()
        true_size = {}
        base = {}
        for c in CATEGORIES:
            scale = CATEGORIES[c]["sizes"]
            mid = (len(scale) - 1) / 2.0
            base[c] = mid + 1.1 * body + 0.6 * rng.normal()
        for b in BRANDS:
            for c in CATEGORIES:
                n = len(CATEGORIES[c]["sizes"])
                true_size[(b, c)] = int(np.clip(round(base[c] + offsets[(b, c)]), 0, n - 1))
        users.append(_User(
            user_id=f"U{i:05d}",
            gender=gender,
            true_size=true_size,
            archetype_cum=_cum(_taste(rng, n_arch_per_gender, config.archetype_focus)),
            archetypes=archetypes,
            category_cum=_cum(rng.dirichlet(np.full(len(cats), config.category_concentration))),
            categories=cats,
            mismatch=float(rng.beta(conc * m, conc * (1 - m))) if 0 < m < 1 else m,
            return_mult=float(_lognormal_mean1(rng, 0.6)),
            cod_prob=float(rng.beta(2.0, 3.0)),
            app_prob=0.7,
            city=CITIES[min(int(rng.zipf(1.6)) - 1, len(CITIES) - 1)],
        ))
    return users


def _taste(rng: np.random.Generator, k: int, focus: float) -> np.ndarray:
    # one dominant archetype, the remaining mass spread by a flat Dirichlet
    w = (1.0 - focus) * rng.dirichlet(np.ones(k))
    w[int(rng.integers(k))] += focus
    return w


def _is_weekend(ts_ms: int) -> bool:
    # 1970-01-01 was a Thursday (weekday 3 with Monday = 0)
    return ((ts_ms // DAY_MS) + 3) % 7 >= 5


def _is_morning(ts_ms: int) -> bool:
    hour = (ts_ms % DAY_MS) // HOUR_MS
    return 6 <= hour < 18


# --------------------------------------------------------------------------
# Ground-truth summary


@dataclass
class GroundTruthReport:
    n_carts: int
    n_returned_carts: int
    n_items: int
    n_returned_items: int
    by_cart_size: dict[int, tuple[int, int]]  # size -> (carts, returned carts)
    size_fit_share: float | None
    similar_cart_share: float | None
    color_variant_cart_share: float | None

    def rate(self, sizes) -> float:
        n = sum(self.by_cart_size.get(s, (0, 0))[0] for s in sizes)
        r = sum(self.by_cart_size.get(s, (0, 0))[1] for s in sizes)
        return r / n if n else float("nan")

    @property
    def rate_single(self) -> float:
        return self.rate([1])

    @property
    def rate_over_five(self) -> float:
        return self.rate([s for s in self.by_cart_size if s > 5])

    def to_json(self) -> dict:
        d = asdict(self)
        d["by_cart_size"] = {str(k): list(v) for k, v in sorted(self.by_cart_size.items())}
        d["rate_single"] = self.rate_single
        d["rate_over_five"] = self.rate_over_five
        return d


def ground_truth_report(carts, truth: GroundTruth | None = None,
                        catalog=None) -> GroundTruthReport:
    """Exact counts over labelled carts.

    ``size_fit_share`` is the fraction of returned items whose recorded reason
    is size_fit (needs ``truth``). ``similar_cart_share`` is the fraction of
    returned carts holding two items of one archetype (needs ``truth``).
    ``color_variant_cart_share`` is the fraction of returned carts holding two
    colors of one style group (needs ``catalog``).
    """
    carts = list(carts)
    style = {p.product_id: p.style_group_id for p in catalog} if catalog is not None else None
    by_size: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    n_items = n_ret_items = n_ret_carts = size_fit = similar = color = 0
    for c in carts:
        if c.per_item_returned is None:
            raise ValueError(f"cart {c.cart_id} is unlabeled")
        returned = any(c.per_item_returned)
        by_size[c.size][0] += 1
        by_size[c.size][1] += returned
        n_items += c.size
        n_ret_items += sum(c.per_item_returned)
        if not returned:
            continue
        n_ret_carts += 1
        if truth is not None:
            items = truth.cart_items[c.cart_id]
            size_fit += sum(t.reason == "size_fit" for t in items)
            arch = [truth.product_archetype[p] for p in c.product_ids]
            similar += len(set(arch)) < len(arch)
        if style is not None:
            groups = [style[p] for p in c.product_ids]
            color += len(set(groups)) < len(groups)
    return GroundTruthReport(
        n_carts=len(carts),
        n_returned_carts=n_ret_carts,
        n_items=n_items,
        n_returned_items=n_ret_items,
        by_cart_size={k: (v[0], v[1]) for k, v in sorted(by_size.items())},
        size_fit_share=(size_fit / n_ret_items if n_ret_items else 0.0) if truth is not None else None,
        similar_cart_share=(similar / n_ret_carts if n_ret_carts else 0.0) if truth is not None else None,
        color_variant_cart_share=(color / n_ret_carts if n_ret_carts else 0.0) if style is not None else None,
    )


# --------------------------------------------------------------------------
# Files


DATA_FILES = ("catalog.jsonl", "events.jsonl", "carts.jsonl", "truth.jsonl")


def write_dataset(ds: Dataset, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f for f in DATA_FILES]
    write_jsonl(paths[0], ds.catalog)
    write_jsonl(paths[1], ds.events)
    write_jsonl(paths[2], ds.carts)
    write_jsonl(paths[3], ds.truth.to_lines())
    return paths


def read_truth(path: str | Path) -> GroundTruth:
    return GroundTruth.from_lines(iter_jsonl(path))


def config_to_json(config: GenConfig) -> str:
    return json.dumps(asdict(config), sort_keys=True)
