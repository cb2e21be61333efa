import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from returnguard import sizing
from returnguard.datagen import size_index
from returnguard.domain import Gender
from returnguard.sizing import SkipGramConfig, SkipGramModel, UserSequence

from helpers import cart, product, rel_err


def seq(user, tokens):
    return UserSequence(user, tuple(tokens), tuple(range(len(tokens))))


def test_token_format():
    p = product("p", brand="Nike", gender=Gender.MEN, category="Shoes", usage="Sports", size="10")
    assert sizing.tokenize(p) == "Nike-Men-Shoes-Sports-10"


def test_dash_in_field_is_escaped_and_round_trips():
    p = product("p", brand="Levi-s", category="Jeans", usage="Casual", size="32")
    text = sizing.tokenize(p)
    assert text == "Levi\\-s-Men-Jeans-Casual-32"
    assert sizing.parse_token(text) == ("Levi-s", "Men", "Jeans", "Casual", "32")


field = st.text(alphabet="ab-\\", min_size=1, max_size=4)


@given(st.tuples(field, field, field, field, field), st.tuples(field, field, field, field, field))
@settings(max_examples=200, deadline=None)
def test_tokens_are_injective(a, b):
    ta, tb = sizing.join_fields(a), sizing.join_fields(b)
    assert sizing.parse_token(ta) == a
    assert (ta == tb) == (a == b)


def test_empty_field_is_an_error():
    with pytest.raises(ValueError):
        sizing.tokenize(product("p", size=""))
    with pytest.raises(ValueError):
        sizing.parse_token("a-b-c")


def test_sequences_follow_add_time_across_carts():
    catalog = {k: product(k, size=s) for k, s in (("a", "7"), ("b", "8"), ("c", "9"), ("d", "10"))}
    c1 = cart("c1", "u", ["a", "c"], ts=10_000)   # adds at 8000, 9000
    c2 = cart("c2", "u", ["b", "d"], ts=9_500)    # adds at 7500, 8500
    c3 = cart("c3", "v", ["d"], ts=5_000)
    seqs = sizing.build_sequences([c1, c2, c3], catalog)
    assert [s.user_id for s in seqs] == ["u", "v"]
    flat = sorted((it.cart_add_ts, it.product_id) for c in (c1, c2) for it in c.items)
    assert seqs[0].tokens == tuple(sizing.tokenize(catalog[p]) for _, p in flat)
    assert list(seqs[0].timestamps) == sorted(seqs[0].timestamps)


def test_add_time_ties_break_by_product_id():
    catalog = {k: product(k, size=s) for k, s in (("b", "8"), ("a", "7"))}
    c = cart("c", "u", ["b", "a"])
    c = type(c)(c.cart_id, c.user_id, tuple(type(it)(it.product_id, 5) for it in c.items),
                c.delivery_city, c.platform, c.order_timestamp, c.payment_mode)
    (s,) = sizing.build_sequences([c], catalog)
    assert s.tokens == (sizing.tokenize(catalog["a"]), sizing.tokenize(catalog["b"]))


def test_no_carts_no_sequences_and_unknown_products_raise():
    assert sizing.build_sequences([], {}) == []
    with pytest.raises(KeyError):
        sizing.build_sequences([cart("c", "u", ["zz"])], {})


def test_larger_window_never_loses_pairs():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.integers(0, 5, size=int(rng.integers(1, 12))).tolist()
        counts = [len(sizing.context_pairs(s, w)) for w in range(1, 6)]
        assert counts == sorted(counts)


def test_center_gradients_match_central_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        u = rng.normal(size=3)
        V = rng.normal(size=(5, 3))
        targets = rng.integers(0, 5, size=int(rng.integers(1, 5)))
        _, gu, gV = sizing.center_loss_and_grads(u, V, targets)
        eps = 1e-5
        for arr, g in ((u, gu), (V, gV)):
            num = np.empty_like(arr)
            for k in np.ndindex(arr.shape):
                old = arr[k]
                arr[k] = old + eps
                up = sizing.center_loss_and_grads(u, V, targets)[0]
                arr[k] = old - eps
                down = sizing.center_loss_and_grads(u, V, targets)[0]
                arr[k] = old
                num[k] = (up - down) / (2 * eps)
            worst = max(worst, float(rel_err(g, num).max()))
    assert worst < 1e-5


def test_training_kernel_takes_the_analytic_step():
    rng = np.random.default_rng(1)
    U = rng.normal(size=(5, 3))
    V = rng.normal(size=(5, 3))
    targets = np.array([1, 3, 3])
    _, gu, gV = sizing.center_loss_and_grads(U[2].copy(), V.copy(), targets)
    U2, V2 = U.copy(), V.copy()
    bad = sizing._full_softmax_epoch(U2, V2, np.array([2]), np.array([0, 3]), targets,
                                     np.array([0.01]))
    assert bad == -1
    np.testing.assert_allclose(U2[2], U[2] - 0.01 * gu, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(V2, V - 0.01 * gV, rtol=1e-12, atol=1e-14)


def hand_model(U, V):
    U, V = np.asarray(U, dtype=float), np.asarray(V, dtype=float)
    return SkipGramModel([f"t{k}" for k in range(len(U))], U, V, 1)


def test_softmax_hand_values():
    m = hand_model(np.eye(3), np.eye(3))
    e = math.e
    got = [sizing.softmax_prob(m, 0, t) for t in range(3)]
    np.testing.assert_allclose(got, [e / (e + 2), 1 / (e + 2), 1 / (e + 2)], rtol=1e-14)
    z = hand_model(np.zeros((4, 2)), np.zeros((4, 2)))
    assert all(sizing.softmax_prob(z, c, t) == pytest.approx(0.25, abs=1e-15)
               for c in range(4) for t in range(4))


def test_softmax_normalises():
    rng = np.random.default_rng(2)
    m = hand_model(rng.normal(0, 3, size=(30, 4)), rng.normal(0, 3, size=(30, 4)))
    for c in rng.integers(0, 30, size=100):
        assert sum(sizing.softmax_prob(m, int(c), t) for t in range(30)) == pytest.approx(1.0, abs=1e-9)


def test_zero_epochs_keeps_seeded_initialisation():
    model = sizing.train_skipgram([seq("u", ["b", "a", "c"])], SkipGramConfig(epochs=0, dim=4, seed=3))
    rng = np.random.default_rng(3)
    np.testing.assert_array_equal(model.input_vectors, rng.normal(0, 0.01, size=(3, 4)))
    np.testing.assert_array_equal(model.output_vectors, rng.normal(0, 0.01, size=(3, 4)))
    assert model.vocab == ["a", "b", "c"]


def test_two_token_vocab_learns_its_only_context():
    seqs = [seq(f"u{k}", ["A", "B"]) for k in range(50)]
    model = sizing.train_skipgram(seqs, SkipGramConfig(window=1, dim=4, epochs=50, learning_rate=0.1))
    a, b = model.token("A").token_id, model.token("B").token_id
    assert sizing.softmax_prob(model, a, b) > 0.95
    assert sizing.softmax_prob(model, b, a) > 0.95


def test_degenerate_inputs_are_errors():
    with pytest.raises(ValueError):
        sizing.train_skipgram([seq("u", ["A", "A"])])
    with pytest.raises(ValueError):
        sizing.train_skipgram([seq("u", ["A"]), seq("v", ["B"])])


def test_probe_log_probability_rises_and_training_is_deterministic(small_dataset):
    ds = small_dataset
    seqs = sizing.build_sequences(ds.carts, ds.catalog)
    cfg = SkipGramConfig(seed=5)
    a = sizing.train_skipgram(seqs, cfg)
    b = sizing.train_skipgram(seqs, cfg)
    np.testing.assert_array_equal(a.input_vectors, b.input_vectors)
    assert all(y >= x for x, y in zip(a.history[:5], a.history[1:5]))


def test_sampled_softmax_trains(small_dataset):
    seqs = sizing.build_sequences(small_dataset.carts, small_dataset.catalog)
    model = sizing.train_skipgram(seqs, SkipGramConfig(negatives=5, seed=1))
    assert np.isfinite(model.input_vectors).all()
    assert model.history[-1] > model.history[0]


def test_user_vector_is_the_mean():
    rng = np.random.default_rng(4)
    U = rng.normal(size=(6, 3))
    m = hand_model(U, U)
    np.testing.assert_array_equal(sizing.user_sizing_vector(m, ["t2"]), U[2])
    x = hand_model(np.array([[1.0, -2.0], [-1.0, 2.0]]), np.zeros((2, 2)))
    np.testing.assert_array_equal(sizing.user_sizing_vector(x, ["t0", "t1"]), [0.0, 0.0])
    toks = [f"t{k}" for k in rng.integers(0, 6, size=5)]
    expect = sum(U[int(t[1:])] for t in toks) / 5
    np.testing.assert_allclose(sizing.user_sizing_vector(m, seq("u", toks)), expect, rtol=1e-14)
    with pytest.raises(ValueError):
        sizing.user_sizing_vector(m, [])


def test_neighbourhood_report_on_hand_vectors():
    vocab = ["Nike-Men-Shoes-Sports-8", "Nike-Men-Shoes-Sports-9", "Puma-Men-Shirts-Casual-M"]
    U = np.array([[1.0, 0.1], [1.0, 0.0], [0.0, 1.0]])
    m = SkipGramModel(vocab, U, U.copy(), 1, [5, 5, 5])
    r = sizing.neighbourhood_report(m, size_index)
    assert r.n_probes == 3
    assert r.same_line_share == pytest.approx(2 / 3)
    assert r.modal_step == 1


def test_save_load_round_trip(tmp_path):
    model = sizing.train_skipgram([seq("u", ["b", "a", "c"])], SkipGramConfig(epochs=2, dim=4))
    model.save(tmp_path / "s.rgmc")
    back = SkipGramModel.load(tmp_path / "s.rgmc")
    assert back.vocab == model.vocab and back.history == model.history
    np.testing.assert_array_equal(back.output_vectors, model.output_vectors)
