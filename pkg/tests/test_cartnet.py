import numpy as np
import pytest

from returnguard import cartnet, container, pipeline
from returnguard.cartnet import MlpModel, TrainConfig

from helpers import rel_err


def zero_model(n_in, hidden=(4, 3)):
    h1, h2 = hidden
    return MlpModel(np.zeros((h1, n_in)), np.zeros(h1), np.zeros((h2, h1)), np.zeros(h2),
                    np.zeros((2, h2)), np.zeros(2))


def test_zero_network_is_a_coin_flip():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(cartnet.predict_many(zero_model(6), rng.normal(size=(20, 6))), 0.5)


def test_relu_is_dead_at_zero_input_with_zero_biases():
    rng = np.random.default_rng(1)
    m = cartnet.initialize(5, TrainConfig(hidden=(8, 8)))
    m = m.with_params({**m.params(), "W3": rng.normal(size=(2, 8))})
    assert cartnet.predict_many(m, np.zeros(5))[0] == 0.5


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(2)
    m = cartnet.initialize(7, TrainConfig(hidden=(16, 8), seed=3))
    X = rng.normal(size=(1000, 7))
    P, _ = cartnet.forward(m, X)
    assert ((P > 0) & (P < 1)).all()  # logit gaps stay well inside float64 range here
    big = m.with_params({k: v * 5 for k, v in m.params().items()})
    np.testing.assert_allclose(cartnet.forward(big, X)[0].sum(axis=1), 1.0, atol=1e-9)


def test_hand_network():
    one = np.ones((1, 1))
    m = MlpModel(one, np.zeros(1), one, np.zeros(1), np.ones((2, 1)), np.zeros(2),
                 config=TrainConfig(hidden=(1, 1)))
    P, cache = cartnet.forward(m, [1.0])
    np.testing.assert_array_equal(cache["H2"], [[1.0]])
    assert P[0, 1] == 0.5


def test_width_mismatch_is_an_error():
    with pytest.raises(ValueError):
        cartnet.forward(zero_model(3), np.zeros(4))
    with pytest.raises(ValueError):
        MlpModel(np.zeros((4, 3)), np.zeros(5), np.zeros((3, 4)), np.zeros(3), np.zeros((2, 3)),
                 np.zeros(2))


def test_gradients_match_central_differences():
    rng = np.random.default_rng(4)
    model = cartnet.initialize(5, TrainConfig(hidden=(8, 8), seed=5))
    model = model.with_params({k: v + rng.normal(0, 0.1, size=v.shape) for k, v in model.params().items()})
    X = rng.normal(size=(10, 5))
    y = rng.random(10) < 0.5
    w = rng.uniform(0.5, 2.0, size=10)
    l2 = 0.01
    _, grads = cartnet.loss_and_grads(model, X, y, w, l2)
    eps = 1e-4
    worst = 0.0
    for name in cartnet.PARAMS:
        params = {k: v.copy() for k, v in model.params().items()}
        num = np.empty_like(params[name])
        for idx in np.ndindex(num.shape):
            old = params[name][idx]
            params[name][idx] = old + eps
            up = cartnet.loss_and_grads(model.with_params(params), X, y, w, l2)[0]
            params[name][idx] = old - eps
            down = cartnet.loss_and_grads(model.with_params(params), X, y, w, l2)[0]
            params[name][idx] = old
            num[idx] = (up - down) / (2 * eps)
        # entries whose true gradient is zero (dead units) compare against an absolute floor
        mask = np.maximum(np.abs(num), np.abs(grads[name])) > 1e-7
        if mask.any():
            worst = max(worst, float(rel_err(grads[name][mask], num[mask]).max()))
    assert worst < 1e-4


def separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    margin = X @ np.array([1.0, -2.0]) + 0.1
    keep = np.abs(margin) > 0.05
    return X[keep], margin[keep] > 0


def test_separable_toy_is_learned():
    X, y = separable()
    m = cartnet.train(X, y, TrainConfig(hidden=(16, 8), epochs=200, learning_rate=0.05, l2=0.0))
    acc = ((cartnet.predict_many(m, X) > 0.5) == y).mean()
    assert acc >= 0.99


def test_zero_epochs_is_the_seeded_initialisation():
    X, y = separable()
    cfg = TrainConfig(epochs=0, seed=8, standardize=False)
    m = cartnet.train(X, y, cfg)
    init = cartnet.initialize(2, cfg)
    for k in cartnet.PARAMS:
        np.testing.assert_array_equal(getattr(m, k), getattr(init, k))


def test_training_is_deterministic_and_loss_falls_early():
    X, y = separable(seed=1)
    a = cartnet.train(X, y, TrainConfig(epochs=10, seed=2))
    b = cartnet.train(X, y, TrainConfig(epochs=10, seed=2))
    for k in cartnet.PARAMS:
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
    h = a.history
    assert h[0] >= h[1] >= h[2]


def test_single_class_is_an_error():
    with pytest.raises(ValueError):
        cartnet.train(np.zeros((5, 2)), np.ones(5, dtype=bool))


def test_class_weights_balance_the_classes():
    y = np.array([1, 0, 0, 0], dtype=bool)
    w = cartnet.class_weights(y)
    np.testing.assert_allclose(w, [2.0, 2 / 3, 2 / 3, 2 / 3])
    assert w[y].sum() == pytest.approx(w[~y].sum())


def test_save_load_round_trip(tmp_path):
    X, y = separable()
    m = cartnet.train(X, y, TrainConfig(epochs=2), manifest="abc")
    m.save(tmp_path / "m.rgmc")
    back = MlpModel.load(tmp_path / "m.rgmc")
    assert back.manifest == "abc" and back.history == m.history and back.config == m.config
    np.testing.assert_array_equal(cartnet.predict_many(back, X), cartnet.predict_many(m, X))
    with pytest.raises(container.ContainerError):
        container.load(tmp_path / "m.rgmc", "productgbm")


def test_big_carts_score_higher_than_single_items(small_run):
    meta, a = container.load(small_run / pipeline.CART_MATRIX, "cart_matrix")
    model = MlpModel.load(small_run / pipeline.CARTNET)
    X = a["X"][a["eval_idx"]]
    size = X[:, meta["names"].index("basic:cart_size")]
    p = cartnet.predict_many(model, X)
    assert p[size > 5].mean() > p[size == 1].mean()


def test_predict_cart_is_pure(small_run):
    ctx = pipeline.feature_context(small_run)
    model = MlpModel.load(small_run / pipeline.CARTNET)
    cart = pipeline.modelling_set(pipeline.read_carts(small_run / pipeline.CARTS),
                                  pipeline._config(small_run)).eval[0]
    p = cartnet.predict_cart(model, ctx, cart)
    assert p == cartnet.predict_cart(model, ctx, cart)
    assert 0.0 < p < 1.0
