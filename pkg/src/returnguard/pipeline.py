"""End-to-end pipeline stages over one output directory.

Each stage reads its inputs from the directory, writes its artifacts there
and records their sha256 digests in ``manifest.json``. Before running, a
stage checks that every input still has the digest recorded by the stage
that produced it, so silently changed upstream artifacts are caught.

Carts ordered before the cutoff are history: they feed the implicit
ratings, embeddings, sizing model and feature store. Carts ordered at or
after the cutoff are the modelling set, split into train and eval.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bpr, cartnet, container, datagen, evaluation, implicit, productgbm, sizing
from .container import file_digest
from .domain import read_carts, read_catalog, read_events, validate_dataset
from .features import (EncoderSpec, FeatureContext, assemble_all, cart_feature_names, fit_encoder,
                       manifest_hash, product_feature_names)
from .rps.store import FeatureStore, build_store

MANIFEST = "manifest.json"
CATALOG = "data/catalog.jsonl"
EVENTS = "data/events.jsonl"
CARTS = "data/carts.jsonl"
TRUTH = "data/truth.jsonl"
GEN_CONFIG = "data/gen_config.json"
VALIDATION = "validation.json"
WEIGHTS = "implicit/weights.json"
RATINGS = "implicit/ratings.jsonl"
IMPLICIT_LOSS = "implicit/loss.json"
BPR = "bpr.rgmc"
SIZING = "sizing.rgmc"
STORE = "store.json"
ENCODER = "encoder.json"
CART_MATRIX = "features/cart_matrix.rgmc"
CARTNET = "cartnet.rgmc"
PRODUCTGBM = "productgbm.rgmc"
EVAL_DIR = "eval"

# per-stage offsets so every stage draws from its own stream of the one seed
_SEED_OFFSET = {"bpr": 1, "sizing": 2, "store": 3, "split": 4, "cartnet": 5, "gbm": 6}


class PipelineError(RuntimeError):
    exit_code = 1

    def __init__(self, message: str, stage: str | None = None, path: str | None = None):
        super().__init__(message)
        self.stage = stage
        self.path = path

    def to_json(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "stage": self.stage,
                "path": self.path}


class MissingArtifact(PipelineError):
    exit_code = 2


class StaleArtifact(PipelineError):
    exit_code = 3


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    gen: dict = field(default_factory=dict)
    history_fraction: float = 0.6
    eval_fraction: float = 0.2
    bpr: dict = field(default_factory=dict)
    sizing: dict = field(default_factory=dict)
    cartnet: dict = field(default_factory=dict)
    gbm: dict = field(default_factory=dict)
    n_clusters: int = 8
    second_stage_threshold: float = 0.5

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    def stage_seed(self, stage: str) -> int:
        return self.seed * 100 + _SEED_OFFSET[stage]


# --------------------------------------------------------------------------
# manifest


class Manifest:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.path = self.root / MANIFEST
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {"stages": {}}

    def producer(self, rel: str) -> tuple[str, str] | None:
        for stage, rec in self.data["stages"].items():
            if rel in rec["outputs"]:
                return stage, rec["outputs"][rel]
        return None

    def require(self, stage: str, inputs: Sequence[str]) -> dict[str, str]:
        """Digest of every input, verified against the producing stage's record."""
        out = {}
        for rel in inputs:
            p = self.root / rel
            prod = self.producer(rel)
            if prod is None or not p.exists():
                raise MissingArtifact(f"{stage}: input {rel} has not been produced", stage, rel)
            digest = file_digest(p)
            if digest != prod[1]:
                raise StaleArtifact(f"{stage}: {rel} changed since stage {prod[0]} wrote it; "
                                    f"rerun {prod[0]}", prod[0], rel)
            out[rel] = digest
        return out

    def record(self, stage: str, inputs: dict[str, str], outputs: Sequence[str], extra: dict | None = None
               ) -> None:
        self.data["stages"][stage] = {
            "inputs": inputs,
            "outputs": {rel: file_digest(self.root / rel) for rel in outputs},
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            **({"info": extra} if extra else {}),
        }
        self.data["stages"] = dict(sorted(self.data["stages"].items()))
        self.path.write_text(json.dumps(self.data, sort_keys=True, indent=1) + "\n")

    def artifact_hashes(self) -> dict[str, str]:
        return {rel: h for rec in self.data["stages"].values() for rel, h in rec["outputs"].items()}


def _config(root: Path) -> PipelineConfig:
    p = root / "pipeline_config.json"
    return PipelineConfig.from_dict(json.loads(p.read_text())) if p.exists() else PipelineConfig()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


# --------------------------------------------------------------------------
# shared helpers


def history_cutoff(carts, fraction: float) -> int:
    """Order timestamp at the given nearest-rank quantile of all carts."""
    ts = sorted(c.order_timestamp for c in carts)
    if not ts:
        raise ValueError("no carts")
    return ts[max(0, math.ceil(fraction * len(ts)) - 1)]


@dataclass
class ModellingSet:
    cutoff_ms: int
    carts: list
    labels: np.ndarray
    train_idx: np.ndarray
    eval_idx: np.ndarray

    @property
    def train(self) -> list:
        return [self.carts[i] for i in self.train_idx]

    @property
    def eval(self) -> list:
        return [self.carts[i] for i in self.eval_idx]


def modelling_set(carts, cfg: PipelineConfig) -> ModellingSet:
    cutoff = history_cutoff(carts, cfg.history_fraction)
    later = sorted((c for c in carts if c.order_timestamp >= cutoff), key=lambda c: c.cart_id)
    labels = np.array([c.returned for c in later], dtype=bool)
    tr, ev = evaluation.stratified_split(labels, cfg.eval_fraction, cfg.stage_seed("split"))
    return ModellingSet(cutoff, later, labels, tr, ev)


def feature_context(root: Path, catalog=None) -> FeatureContext:
    catalog = catalog or {p.product_id: p for p in read_catalog(root / CATALOG)}
    store = FeatureStore.load(root / STORE)
    return FeatureContext(catalog, EncoderSpec.load(root / ENCODER), store.products, store.users,
                          bpr.EmbeddingMatrix.load(root / BPR), sizing.SkipGramModel.load(root / SIZING),
                          n_clusters=store.n_clusters)


# --------------------------------------------------------------------------
# stages


def gen_data(root: str | Path, seed: int | None = None, cfg: PipelineConfig | None = None) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cfg = cfg or _config(root)
    if seed is not None:
        cfg = PipelineConfig.from_dict({**asdict(cfg), "seed": seed})
    _write_json(root / "pipeline_config.json", asdict(cfg))
    gen_cfg = datagen.GenConfig.from_dict({**cfg.gen, "seed": cfg.seed})
    ds = datagen.generate(gen_cfg)
    datagen.write_dataset(ds, root / "data")
    (root / GEN_CONFIG).write_text(datagen.config_to_json(gen_cfg) + "\n")
    man = Manifest(root)
    man.record("gen-data", {}, [CATALOG, EVENTS, CARTS, TRUTH, GEN_CONFIG])
    return {"carts": len(ds.carts), "events": len(ds.events), "products": len(ds.catalog)}


def validate(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("validate", [CATALOG, EVENTS, CARTS])
    report = validate_dataset(read_events(root / EVENTS), read_catalog(root / CATALOG),
                              read_carts(root / CARTS))
    _write_json(root / VALIDATION, report.to_json())
    man.record("validate", inputs, [VALIDATION])
    return report.to_json()


def implicit_stage(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("implicit", [EVENTS, CARTS])
    cfg = _config(root)
    cutoff = history_cutoff(read_carts(root / CARTS), cfg.history_fraction)
    counts = implicit.count_signals(read_events(root / EVENTS), cutoff)
    history: list[float] = []
    weights = implicit.learn_weights(implicit.training_pairs(counts), implicit.FitConfig(), history)
    (root / WEIGHTS).parent.mkdir(parents=True, exist_ok=True)
    weights.save(root / WEIGHTS)
    implicit.write_ratings(root / RATINGS, implicit.ratings_matrix(counts, weights))
    _write_json(root / IMPLICIT_LOSS, {"cutoff_ms": cutoff, "log_loss": history})
    man.record("implicit", inputs, [WEIGHTS, RATINGS, IMPLICIT_LOSS])
    return {"pairs": len(counts), "final_log_loss": history[-1], "weights": asdict(weights)}


def train_bpr(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("train-bpr", [RATINGS, CATALOG])
    cfg = _config(root)
    bcfg = bpr.BprConfig(**{**cfg.bpr, "seed": cfg.stage_seed("bpr")})
    items = [p.product_id for p in read_catalog(root / CATALOG)]
    matrix = bpr.ImplicitMatrix.from_ratings(implicit.read_ratings(root / RATINGS), items)
    emb = bpr.train(matrix, bcfg)
    emb.save(root / BPR, bcfg)
    man.record("train-bpr", inputs, [BPR])
    return {"users": len(emb.user_ids), "items": len(emb.item_ids), "observed": matrix.n_observed}


def train_sizing(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("train-sizing", [CARTS, CATALOG])
    cfg = _config(root)
    carts = read_carts(root / CARTS)
    cutoff = history_cutoff(carts, cfg.history_fraction)
    seqs = sizing.build_sequences([c for c in carts if c.order_timestamp < cutoff],
                                  read_catalog(root / CATALOG))
    scfg = sizing.SkipGramConfig(**{**cfg.sizing, "seed": cfg.stage_seed("sizing")})
    model = sizing.train_skipgram(seqs, scfg)
    model.save(root / SIZING, scfg)
    man.record("train-sizing", inputs, [SIZING])
    return {"users": len(seqs), "vocab": len(model.vocab), "probe_log_prob": model.history}


def build_store_stage(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("build-store", [EVENTS, CATALOG, CARTS])
    cfg = _config(root)
    carts = read_carts(root / CARTS)
    cutoff = history_cutoff(carts, cfg.history_fraction)
    store = build_store(read_events(root / EVENTS), read_catalog(root / CATALOG), cutoff, carts,
                        cfg.n_clusters, cfg.stage_seed("store"))
    store.save(root / STORE)
    man.record("build-store", inputs, [STORE])
    return {"cutoff_ms": cutoff, "users": len(store.users), "products": len(store.products),
            "digest": store.digest()}


def fit_encoder_stage(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("fit-encoder", [CARTS, CATALOG])
    cfg = _config(root)
    ms = modelling_set(read_carts(root / CARTS), cfg)
    catalog = {p.product_id: p for p in read_catalog(root / CATALOG)}
    enc = fit_encoder(ms.train, catalog)
    enc.save(root / ENCODER)
    man.record("fit-encoder", inputs, [ENCODER])
    return enc.to_json()


def _cart_matrix(root: Path, cfg: PipelineConfig):
    catalog = {p.product_id: p for p in read_catalog(root / CATALOG)}
    ctx = feature_context(root, catalog)
    ms = modelling_set(read_carts(root / CARTS), cfg)
    X = np.array([assemble_all(c, ctx)[0] for c in ms.carts])
    return ctx, ms, X


_FEATURE_INPUTS = [CARTS, CATALOG, ENCODER, STORE, BPR, SIZING]


def train_cart(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("train-cart", _FEATURE_INPUTS)
    cfg = _config(root)
    ctx, ms, X = _cart_matrix(root, cfg)
    names = cart_feature_names(ctx)
    digest = manifest_hash(names)
    (root / CART_MATRIX).parent.mkdir(parents=True, exist_ok=True)
    container.save(root / CART_MATRIX, "cart_matrix",
                   {"rows": int(X.shape[0]), "manifest": digest, "names": names,
                    "cutoff_ms": ms.cutoff_ms},
                   {"X": X, "y": ms.labels.astype(np.int64), "train_idx": ms.train_idx,
                    "eval_idx": ms.eval_idx})
    tcfg = cartnet.TrainConfig.from_dict({**cfg.cartnet, "seed": cfg.stage_seed("cartnet")})
    model = cartnet.train(X[ms.train_idx], ms.labels[ms.train_idx], tcfg, manifest=digest)
    model.save(root / CARTNET)
    p = cartnet.predict_many(model, X[ms.eval_idx])
    man.record("train-cart", inputs, [CART_MATRIX, CARTNET])
    return {"rows": int(X.shape[0]), "width": int(X.shape[1]),
            "eval_auc": evaluation.auc(p, ms.labels[ms.eval_idx])}


def train_product(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("train-product", _FEATURE_INPUTS + [CARTNET])
    cfg = _config(root)
    catalog = {p.product_id: p for p in read_catalog(root / CATALOG)}
    ctx = feature_context(root, catalog)
    ms = modelling_set(read_carts(root / CARTS), cfg)
    cart_model = cartnet.MlpModel.load(root / CARTNET)
    gcfg = productgbm.GbmConfig.desk(**{**cfg.gbm, "seed": cfg.stage_seed("gbm")})
    model = productgbm.fit_second_stage(ms.train, cart_model, ctx, gcfg, cfg.second_stage_threshold,
                                        manifest=manifest_hash(product_feature_names(ctx)))
    model.save(root / PRODUCTGBM)
    man.record("train-product", inputs, [PRODUCTGBM])
    X, y = productgbm.second_stage_rows(ms.eval, ctx, cart_model, 0.0)
    return {"trees": len(model.trees), "eval_item_auc": evaluation.auc(
        productgbm.predict_many(model, X), y)}


def evaluate(root: str | Path) -> dict:
    root = Path(root)
    man = Manifest(root)
    inputs = man.require("evaluate", [CART_MATRIX])
    cfg = _config(root)
    meta, a = container.load(root / CART_MATRIX, "cart_matrix")
    X, y = a["X"], a["y"].astype(bool)
    data = evaluation.AblationDataset(X[a["train_idx"]], y[a["train_idx"]], X[a["eval_idx"]],
                                      y[a["eval_idx"]], meta["names"])
    gbm_cfg = productgbm.GbmConfig.desk(**{**cfg.gbm, "seed": cfg.stage_seed("gbm")})
    mlp_cfg = cartnet.TrainConfig.from_dict({**cfg.cartnet, "seed": cfg.stage_seed("cartnet")})
    rows = evaluation.ablation_report(data, gbm_cfg, mlp_cfg)
    paths = evaluation.write_ablation(rows, data.y_eval, root / EVAL_DIR)
    summary = {r.variant: {"auc": r.auc, "precision": r.precision, "recall": r.recall,
                           "n_features": r.n_features} for r in rows}
    _write_json(root / EVAL_DIR / "summary.json", summary)
    outs = [str(p.relative_to(root)) for p in paths.values()] + [f"{EVAL_DIR}/summary.json"]
    man.record("evaluate", inputs, outs)
    return summary


STAGES = ("gen-data", "validate", "implicit", "train-bpr", "train-sizing", "build-store",
          "fit-encoder", "train-cart", "train-product", "evaluate")


def run_all(root: str | Path, seed: int = 42, cfg: PipelineConfig | None = None) -> dict[str, str]:
    """Every stage from data generation through evaluation; returns artifact digests."""
    root = Path(root)
    gen_data(root, seed, cfg)
    validate(root)
    implicit_stage(root)
    train_bpr(root)
    train_sizing(root)
    build_store_stage(root)
    fit_encoder_stage(root)
    train_cart(root)
    train_product(root)
    evaluate(root)
    return Manifest(root).artifact_hashes()
