"""Cart-level return classifier: x -> ReLU -> ReLU -> 2-way softmax.

Trained by mini-batch SGD on class-weighted cross-entropy plus an L2 penalty
on the weight matrices. Inputs are standardised with the training mean and
scale, which are stored inside the model so serving applies the same map.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import container

KIND = "cartnet"
PARAMS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, int] = (64, 32)
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 64
    l2: float = 3e-2
    seed: int = 0
    class_weighted: bool = True
    standardize: bool = True

    def __post_init__(self):
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError("hidden must be two positive layer widths")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0 or self.l2 < 0:
            raise ValueError("invalid training hyperparameters")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    config: TrainConfig = field(default_factory=TrainConfig)
    history: list[float] = field(default_factory=list)
    manifest: str | None = None

    def __post_init__(self):
        if not (self.W1.shape[0] == self.b1.size == self.W2.shape[1]
                and self.W2.shape[0] == self.b2.size == self.W3.shape[1]
                and self.W3.shape[0] == self.b3.size == 2):
            raise ValueError("inconsistent layer shapes")
        if self.mean is None:
            self.mean = np.zeros(self.n_inputs)
        if self.scale is None:
            self.scale = np.ones(self.n_inputs)

    @property
    def n_inputs(self) -> int:
        return int(self.W1.shape[1])

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAMS}

    def with_params(self, params: dict[str, np.ndarray]) -> "MlpModel":
        return MlpModel(**{k: np.array(params[k], dtype=np.float64) for k in PARAMS},
                        mean=self.mean.copy(), scale=self.scale.copy(), config=self.config,
                        history=list(self.history), manifest=self.manifest)

    def save(self, path: str | Path) -> None:
        arrays = {**self.params(), "mean": self.mean, "scale": self.scale}
        meta = {"config": asdict(self.config), "history": self.history, "manifest": self.manifest,
                "layers": [self.n_inputs, *self.config.hidden, 2]}
        container.save(path, KIND, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        meta, a = container.load(path, KIND)
        return cls(**{k: a[k] for k in PARAMS}, mean=a["mean"], scale=a["scale"],
                   config=TrainConfig.from_dict(meta["config"]), history=meta["history"],
                   manifest=meta["manifest"])


def initialize(n_inputs: int, cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """He-scaled normal weights and zero biases from the seeded generator."""
    rng = np.random.default_rng(cfg.seed)
    h1, h2 = cfg.hidden
    sizes = [(h1, n_inputs), (h2, h1), (2, h2)]
    W = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)) for fan_out, fan_in in sizes]
    return MlpModel(W[0], np.zeros(h1), W[1], np.zeros(h2), W[2], np.zeros(2), config=cfg)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: MlpModel, x) -> tuple[np.ndarray, dict]:
    """Return probabilities of shape (n, 2) as (p_no_return, p_return) plus cached activations.

    ``x`` is raw (unstandardised) input, one row per cart.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {X.shape[1]}")
    Z0 = (X - model.mean) / model.scale
    A1 = Z0 @ model.W1.T + model.b1
    H1 = np.maximum(A1, 0.0)
    A2 = H1 @ model.W2.T + model.b2
    H2 = np.maximum(A2, 0.0)
    P = _softmax(H2 @ model.W3.T + model.b3)
    return P, {"Z0": Z0, "A1": A1, "H1": H1, "A2": A2, "H2": H2, "P": P}


def loss_and_grads(model: MlpModel, X, y, weights=None, l2: float | None = None
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """Weighted mean cross-entropy + (l2/2) * sum of squared weights, and its gradients."""
    y = np.asarray(y).astype(np.int64).ravel()
    n = y.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    l2 = model.config.l2 if l2 is None else l2
    P, c = forward(model, X)
    logp = np.log(np.clip(P[np.arange(n), y], 1e-300, None))
    loss = float(-(w * logp).sum() / n)
    loss += 0.5 * l2 * sum(float((getattr(model, k) ** 2).sum()) for k in ("W1", "W2", "W3"))
    D3 = P.copy()
    D3[np.arange(n), y] -= 1.0
    D3 *= (w / n)[:, None]
    D2 = (D3 @ model.W3) * (c["A2"] > 0)
    D1 = (D2 @ model.W2) * (c["A1"] > 0)
    grads = {
        "W3": D3.T @ c["H2"] + l2 * model.W3, "b3": D3.sum(axis=0),
        "W2": D2.T @ c["H1"] + l2 * model.W2, "b2": D2.sum(axis=0),
        "W1": D1.T @ c["Z0"] + l2 * model.W1, "b1": D1.sum(axis=0),
    }
    return loss, grads


def class_weights(y: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights normalised so the mean weight is 1."""
    y = np.asarray(y).astype(bool)
    n, pos = y.size, int(y.sum())
    return np.where(y, n / (2.0 * pos), n / (2.0 * (n - pos)))


def train(X, y, cfg: TrainConfig = TrainConfig(), manifest: str | None = None) -> MlpModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (rows, features) with one label per row")
    if y.all() or not y.any():
        raise ValueError("train needs examples of both classes")
    model = initialize(X.shape[1], cfg)
    model.manifest = manifest
    if cfg.standardize:
        sd = X.std(axis=0)
        model.mean, model.scale = X.mean(axis=0), np.where(sd > 0, sd, 1.0)
    w = class_weights(y) if cfg.class_weighted else np.ones(y.size)
    rng = np.random.default_rng(cfg.seed + 1)
    params = model.params()
    for _ in range(cfg.epochs):
        perm = rng.permutation(y.size)
        for start in range(0, y.size, cfg.batch_size):
            b = perm[start:start + cfg.batch_size]
            _, grads = loss_and_grads(model, X[b], y[b], w[b], cfg.l2)
            for k in PARAMS:
                params[k] -= cfg.learning_rate * grads[k]
        if not all(np.isfinite(p).all() for p in params.values()):
            raise FloatingPointError("non-finite parameters; lower the learning rate")
        model.history.append(loss_and_grads(model, X, y, w, cfg.l2)[0])
    return model


def predict_many(model: MlpModel, X) -> np.ndarray:
    return forward(model, np.atleast_2d(X))[0][:, 1]


def predict_cart(model: MlpModel, ctx, cart) -> float:
    from .features import assemble_cart_vector

    x, _ = assemble_cart_vector(cart, ctx)
    return float(predict_many(model, x)[0])
