"""The single scoring path shared by batch evaluation and the HTTP service."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .. import cartnet, productgbm
from ..bpr import EmbeddingMatrix
from ..cartnet import MlpModel
from ..container import file_digest
from ..decision import ActionPolicy, Decision, decide
from ..domain import CartItem, CartRecord, PaymentMode, Platform, ProductRecord, read_catalog
from ..features import (EncoderSpec, FeatureContext, assemble_all, cart_feature_names,
                        manifest_hash, product_feature_names)
from ..productgbm import BoostedEnsemble
from ..sizing import SkipGramModel
from .store import FeatureStore


class ManifestMismatch(RuntimeError):
    """A model was trained on a different feature layout than the one served."""


class BadRequest(ValueError):
    pass


@dataclass(frozen=True)
class Scored:
    cart_probability: float
    item_probabilities: tuple[float, ...] | None  # None: item model not consulted
    decision: Decision


@dataclass
class Predictor:
    ctx: FeatureContext
    cart_model: MlpModel
    item_model: BoostedEnsemble
    policy: ActionPolicy
    versions: dict = field(default_factory=dict)
    store_cutoff_ms: int | None = None

    def __post_init__(self):
        cart_hash = manifest_hash(cart_feature_names(self.ctx))
        item_hash = manifest_hash(product_feature_names(self.ctx))
        if self.cart_model.manifest != cart_hash:
            raise ManifestMismatch("cart model feature manifest does not match the served features")
        if self.item_model.manifest != item_hash:
            raise ManifestMismatch("item model feature manifest does not match the served features")

    def score(self, cart: CartRecord) -> Scored:
        block, items = assemble_all(cart, self.ctx)
        p = float(cartnet.predict_many(self.cart_model, block[None, :])[0])
        item_ps = None
        if p >= self.policy.item_model_threshold:
            item_ps = tuple(float(v) for v in productgbm.predict_many(self.item_model, items))
        return Scored(p, item_ps, decide(p, item_ps if item_ps is not None else [None] * cart.size,
                                         self.policy))


def cart_from_request(req: Mapping, now_ms: int) -> CartRecord:
    """Build a cart from a prediction request; raises BadRequest on invalid input."""
    if not isinstance(req, Mapping):
        raise BadRequest("request body must be a JSON object")
    try:
        user = req["user_id"]
        items = req["items"]
        city = req["delivery_city"]
        platform = Platform(req["platform"])
        payment = PaymentMode(req["payment_mode"])
    except KeyError as e:
        raise BadRequest(f"missing field {e.args[0]!r}") from None
    except ValueError as e:
        raise BadRequest(str(e)) from None
    ts = req.get("timestamp_ms", now_ms)
    discount = req.get("discount", 0)
    if not isinstance(user, str) or not user:
        raise BadRequest("user_id must be a non-empty string")
    if not isinstance(items, list) or not items or not all(isinstance(p, str) and p for p in items):
        raise BadRequest("items must be a non-empty list of product ids")
    if not isinstance(city, str):
        raise BadRequest("delivery_city must be a string")
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise BadRequest("timestamp_ms must be a non-negative integer")
    if not isinstance(discount, int) or isinstance(discount, bool) or discount < 0:
        raise BadRequest("discount must be a non-negative integer")
    return CartRecord("request", user, tuple(CartItem(p, ts) for p in items), city, platform, ts,
                      payment, None, discount)


def response_body(scored: Scored, versions: dict, latency_ms: float) -> dict:
    return {
        "cart_return_probability": scored.cart_probability,
        "per_item_probabilities": (list(scored.item_probabilities)
                                   if scored.item_probabilities is not None else None),
        "segment": scored.decision.segment.value,
        "decision": scored.decision.to_json(),
        "model_versions": versions,
        "latency_ms": latency_ms,
    }


MODEL_FILES = {
    "catalog": "data/catalog.jsonl",
    "encoder": "encoder.json",
    "bpr": "bpr.rgmc",
    "sizing": "sizing.rgmc",
    "cartnet": "cartnet.rgmc",
    "productgbm": "productgbm.rgmc",
    "store": "store.json",
    "policy": "policy.json",
}


def load_predictor(model_dir: str | Path, store_path: str | Path | None = None,
                   policy_path: str | Path | None = None) -> Predictor:
    """Load every artifact of a pipeline directory into memory."""
    d = Path(model_dir)
    paths = {k: d / v for k, v in MODEL_FILES.items()}
    if store_path is not None:
        paths["store"] = Path(store_path)
    if policy_path is not None:
        paths["policy"] = Path(policy_path)
    catalog: dict[str, ProductRecord] = {p.product_id: p for p in read_catalog(paths["catalog"])}
    store = FeatureStore.load(paths["store"])
    ctx = FeatureContext(catalog, EncoderSpec.load(paths["encoder"]), store.products, store.users,
                         EmbeddingMatrix.load(paths["bpr"]), SkipGramModel.load(paths["sizing"]),
                         n_clusters=store.n_clusters)
    policy = ActionPolicy.load(paths["policy"]) if paths["policy"].exists() else ActionPolicy()
    versions = {k: file_digest(paths[k])[:12] for k in ("bpr", "sizing", "cartnet", "productgbm", "store")}
    return Predictor(ctx, MlpModel.load(paths["cartnet"]), BoostedEnsemble.load(paths["productgbm"]),
                     policy, versions, store.cutoff_ms)


def score_batch(predictor: Predictor, carts) -> list[Scored]:
    return [predictor.score(c) for c in carts]


__all__ = ["BadRequest", "ManifestMismatch", "Predictor", "Scored", "cart_from_request",
           "load_predictor", "response_body", "score_batch"]
