import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from returnguard import bpr
from returnguard.bpr import BprConfig, EmbeddingMatrix, ImplicitMatrix, Triplet

from helpers import planted_blocks, rel_err, two_block_split


def fd_grads(w, hi, hj, lam, eps=1e-5):
    out = []
    for which in range(3):
        vecs = [w.copy(), hi.copy(), hj.copy()]
        g = np.empty_like(w)
        for k in range(w.size):
            vecs[which][k] += eps
            up = bpr.triplet_loss(*vecs, lam)
            vecs[which][k] -= 2 * eps
            down = bpr.triplet_loss(*vecs, lam)
            vecs[which][k] += eps
            g[k] = (up - down) / (2 * eps)
        out.append(g)
    return out


def test_gradients_match_central_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        w, hi, hj = rng.normal(size=(3, 4))
        lam = float(rng.uniform(0, 0.1))
        _, gw, ghi, ghj = bpr.triplet_loss_and_grads(w, hi, hj, lam)
        for a, n in zip((gw, ghi, ghj), fd_grads(w, hi, hj, lam)):
            worst = max(worst, float(rel_err(a, n).max()))
    assert worst < 1e-5


def test_zero_factors_give_ln2_and_no_update():
    z = np.zeros(4)
    loss, gw, ghi, ghj = bpr.triplet_loss_and_grads(z, z, z, 0.0)
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    for g in (gw, ghi, ghj):
        np.testing.assert_array_equal(g, 0.0)
    emb = EmbeddingMatrix(["u"], ["a", "b"], np.zeros((1, 4)), np.zeros((2, 4)))
    out = bpr.bpr_step(emb, Triplet("u", "a", "b"), BprConfig(dim=4, lambda_theta=0.0))
    np.testing.assert_array_equal(out.user_factors, 0.0)
    np.testing.assert_array_equal(out.item_factors, 0.0)


@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
@settings(max_examples=50, deadline=None)
def test_unregularised_loss_is_positive(vals):
    w, hi, hj = np.array(vals).reshape(3, 3)
    assert bpr.triplet_loss(w, hi, hj, 0.0) > 0.0


def test_repeated_step_never_lowers_score():
    rng = np.random.default_rng(1)
    emb = EmbeddingMatrix(["u"], ["a", "b"], rng.normal(size=(1, 8)), rng.normal(size=(2, 8)))
    t = Triplet("u", "a", "b")
    cfg = BprConfig(dim=8, lambda_theta=0.0, learning_rate=0.05)
    scores = [bpr.triplet_score(emb, t)]
    for _ in range(100):
        emb = bpr.bpr_step(emb, t, cfg)
        scores.append(bpr.triplet_score(emb, t))
    assert all(b >= a for a, b in zip(scores, scores[1:]))


def test_step_is_pure():
    rng = np.random.default_rng(2)
    emb = EmbeddingMatrix(["u"], ["a", "b"], rng.normal(size=(1, 3)), rng.normal(size=(2, 3)))
    before = emb.copy()
    bpr.bpr_step(emb, Triplet("u", "a", "b"), BprConfig(dim=3))
    np.testing.assert_array_equal(emb.user_factors, before.user_factors)
    np.testing.assert_array_equal(emb.item_factors, before.item_factors)


def test_runaway_learning_rate_is_reported():
    emb = EmbeddingMatrix(["u"], ["a", "b"], np.full((1, 2), 1e200), np.full((2, 2), 1e200))
    emb.item_factors[1] *= -1
    with pytest.raises(bpr.NonFiniteUpdate):
        bpr.bpr_step(emb, Triplet("u", "a", "b"), BprConfig(dim=2, learning_rate=1e200))


def test_affinity_difference_is_the_step_score():
    rng = np.random.default_rng(3)
    emb = EmbeddingMatrix(["u"], ["a", "b"], rng.normal(size=(1, 5)), rng.normal(size=(2, 5)))
    assert bpr.affinity(emb, "u", "a") - bpr.affinity(emb, "u", "b") == bpr.triplet_score(
        emb, Triplet("u", "a", "b"))


def test_affinity_and_similarity_hand_values():
    emb = EmbeddingMatrix(["u", "z"], ["a", "b"], np.array([[1.0, 2.0], [0.0, 0.0]]),
                          np.array([[3.0, 4.0], [0.0, 1.0]]))
    assert bpr.affinity(emb, "u", "a") == 11.0
    assert bpr.affinity(emb, "z", "a") == 0.0 and bpr.affinity(emb, "z", "b") == 0.0
    assert bpr.cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    with pytest.raises(ValueError):
        bpr.cosine(np.zeros(2), np.ones(2))
    with pytest.raises(KeyError):
        bpr.affinity(emb, "nobody", "a")


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3),
       st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_cosine_identity_and_scale_invariance(v, c):
    v = np.array(v)
    assert bpr.cosine(v, v) == pytest.approx(1.0, abs=1e-12)
    other = np.roll(v, 1) + 0.5
    if np.linalg.norm(other) > 1e-3:
        assert bpr.cosine(c * v, c * other) == pytest.approx(bpr.cosine(v, other), abs=1e-12)


def test_only_possible_triplet():
    m = ImplicitMatrix.from_pairs([("u", "A")], ["u"], ["A", "B"])
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert bpr.sample_triplet(m, rng) == Triplet("u", "A", "B")


def test_no_negative_item_is_an_error():
    m = ImplicitMatrix.from_pairs([("u", "A"), ("u", "B")], ["u"], ["A", "B"])
    with pytest.raises(ValueError):
        bpr.sample_triplet(m, np.random.default_rng(0))


def test_triplet_sampling_is_uniform():
    m = ImplicitMatrix.from_pairs([("u", "A"), ("u", "B")], ["u"], ["A", "B", "C", "D"])
    _, i, j = bpr.sample_triplets(m, np.random.default_rng(5), 10_000)
    freq = Counter(zip(i.tolist(), j.tolist()))
    assert set(freq) == {(0, 2), (0, 3), (1, 2), (1, 3)}
    for n in freq.values():
        assert abs(n / 10_000 - 0.25) <= 0.05 * 0.25


def test_ratings_threshold_defines_observed_pairs():
    m = ImplicitMatrix.from_ratings([("u", "a", 0.7), ("u", "b", 0.2), ("v", "a", 0.5)])
    assert m.observed(np.array([0, 0, 1]), np.array([0, 1, 0])).tolist() == [True, False, True]


def test_zero_epochs_returns_seeded_initialisation():
    m, _, _ = planted_blocks(2, 5, 5, 0.5, 0)
    cfg = BprConfig(dim=3, epochs=0, seed=4, init_scale=0.1)
    emb = bpr.train(m, cfg)
    rng = np.random.default_rng(4)
    np.testing.assert_array_equal(emb.user_factors, rng.normal(0, 0.1, size=(10, 3)))
    np.testing.assert_array_equal(emb.item_factors, rng.normal(0, 0.1, size=(10, 3)))


def test_training_is_deterministic():
    m, _, _ = planted_blocks(2, 20, 20, 0.3, 1)
    a = bpr.train(m, BprConfig(seed=9, epochs=5))
    b = bpr.train(m, BprConfig(seed=9, epochs=5))
    np.testing.assert_array_equal(a.user_factors, b.user_factors)
    np.testing.assert_array_equal(a.item_factors, b.item_factors)


def test_planted_two_blocks_rank_held_out_items():
    m, held = two_block_split()
    emb = bpr.train(m, BprConfig(epochs=30, seed=1))
    assert bpr.ranking_auc(emb, m, held) >= 0.90


def test_within_block_similarity_exceeds_cross_block():
    m, _, items = planted_blocks(4, 50, 40, 0.3, 0)
    emb = bpr.train(m, BprConfig(seed=1))
    H = emb.item_factors / np.linalg.norm(emb.item_factors, axis=1, keepdims=True)
    S = H @ H.T
    block = np.arange(len(items)) // 40
    same = (block[:, None] == block[None, :]) & ~np.eye(len(items), dtype=bool)
    assert S[same].mean() > S[block[:, None] != block[None, :]].mean() + 0.3


def test_save_load_round_trip(tmp_path):
    m, _, _ = planted_blocks(2, 5, 5, 0.5, 0)
    emb = bpr.train(m, BprConfig(dim=4, epochs=2, seed=3))
    emb.save(tmp_path / "e.rgmc", BprConfig(dim=4))
    back = EmbeddingMatrix.load(tmp_path / "e.rgmc")
    assert back.user_ids == emb.user_ids and back.item_ids == emb.item_ids and back.seed == 3
    np.testing.assert_array_equal(back.item_factors, emb.item_factors)
