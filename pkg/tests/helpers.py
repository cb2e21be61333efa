"""Small builders shared by the test modules."""
import numpy as np

from returnguard import pipeline
from returnguard.bpr import ImplicitMatrix
from returnguard.domain import CartItem, CartRecord, Gender, PaymentMode, Platform, ProductRecord

SMALL_GEN = {"n_users": 300, "n_products": 300, "n_carts": 3000}


def small_config(seed: int = 7) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(seed=seed, gen=SMALL_GEN, cartnet={"epochs": 15},
                                   gbm={"n_trees": 15})


def product(pid, brand="Nike", gender=Gender.MEN, category="Shoes", usage="Sports", size="9",
            color="Black", style=None, mrp=1999, age_days=10):
    return ProductRecord(pid, brand, gender, category, usage, size, color, style or f"s-{pid}", mrp,
                         age_days)


def cart(cid, user, pids, ts=1_700_000_000_000, labels=None, city="Delhi",
         platform=Platform.APP, payment=PaymentMode.PREPAID, discount=0):
    items = tuple(CartItem(p, ts - 1000 * (len(pids) - k)) for k, p in enumerate(pids))
    return CartRecord(cid, user, items, city, platform, ts, payment,
                      tuple(labels) if labels is not None else None, discount)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def planted_blocks(n_blocks, users_per_block, items_per_block, density, seed):
    """Users of block b interact only with items of block b, each pair with prob ``density``."""
    rng = np.random.default_rng(seed)
    users = [f"u{k:03d}" for k in range(n_blocks * users_per_block)]
    items = [f"i{k:03d}" for k in range(n_blocks * items_per_block)]
    pairs = [(u, items[(k // users_per_block) * items_per_block + i])
             for k, u in enumerate(users) for i in range(items_per_block) if rng.random() < density]
    return ImplicitMatrix.from_pairs(pairs, users, items), users, items


def two_block_split(seed=0):
    # each user interacts with ~90% of their own block; a fifth of those pairs is held out.
    # Dense blocks matter: with sparse blocks the unseen in-block items are as preferred as
    # the held-out ones, which caps the attainable AUC well below 0.9.
    rng = np.random.default_rng(seed)
    users = [f"u{k:03d}" for k in range(200)]
    items = [f"i{k:03d}" for k in range(300)]
    train_pairs, held = [], {}
    for k, u in enumerate(users):
        block = 150 * (k // 100) + np.arange(150)
        obs = block[rng.random(150) < 0.9]
        obs = obs[rng.permutation(obs.size)]
        n_held = obs.size // 5
        held[u] = {items[i] for i in obs[:n_held]}
        train_pairs += [(u, items[i]) for i in obs[n_held:]]
    return ImplicitMatrix.from_pairs(train_pairs, users, items), held
