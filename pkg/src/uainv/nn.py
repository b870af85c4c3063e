"""Dense multilayer perceptrons with exact backpropagation.

Networks are immutable values: training functions return new networks.
Weights are stored ``[out, in]``; a batch ``X`` of shape ``(B, in)`` maps to
``X @ W.T + b``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rows, check_same_rows
from .exceptions import DimensionError, DivergenceError
from .optim import OptimizerSpec

logger = logging.getLogger(__name__)

_ACTIVATION_DEFAULTS = {
    "identity": None,
    "tanh": None,
    "relu": None,
    "leaky_relu": 0.01,
    "elu": 1.0,
    "celu": 1.0,
    "hardswish": None,
    "softplus": None,
}


@dataclass(frozen=True)
class Activation:
    """Pointwise nonlinearity.

    Kinks use a fixed one-sided derivative: ReLU takes 0 at 0, LeakyReLU takes
    its slope at 0 (left side), Hardswish takes the middle branch at -3 and 3.
    ELU takes ``alpha`` at 0 (left side); CELU is C1 at 0.
    """

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in _ACTIVATION_DEFAULTS:
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.param is None and _ACTIVATION_DEFAULTS[self.kind] is not None:
            object.__setattr__(self, "param", _ACTIVATION_DEFAULTS[self.kind])
        if self.kind in ("elu", "celu") and not self.param > 0:
            raise ValueError(f"{self.kind} needs alpha > 0")

    @classmethod
    def parse(cls, text):
        """Parse ``"tanh"`` or ``"leaky_relu(0.05)"``; accepts ``Activation`` as-is."""
        if isinstance(text, Activation):
            return text
        m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\(\s*([^)]+)\s*\))?\s*", text.lower())
        if not m:
            raise ValueError(f"cannot parse activation {text!r}")
        name = {"leakyrelu": "leaky_relu", "linear": "identity"}.get(m.group(1), m.group(1))
        return cls(name, float(m.group(2)) if m.group(2) else None)

    @property
    def name(self):
        if self.param is None:
            return self.kind
        return f"{self.kind}({self.param!r})"

    def __call__(self, z):
        k = self.kind
        if k == "identity":
            return z.copy()
        if k == "tanh":
            return np.tanh(z)
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "leaky_relu":
            return np.where(z > 0, z, self.param * z)
        if k == "elu":
            return np.where(z > 0, z, self.param * np.expm1(np.minimum(z, 0.0)))
        if k == "celu":
            a = self.param
            return np.where(z > 0, z, a * np.expm1(np.minimum(z, 0.0) / a))
        if k == "hardswish":
            return z * np.clip(z + 3.0, 0.0, 6.0) / 6.0
        return softplus(z)

    def derivative(self, z, out=None):
        """d(activation)/dz at ``z``; ``out`` is the forward value if already known."""
        k = self.kind
        if k == "identity":
            return np.ones_like(z)
        if k == "tanh":
            a = np.tanh(z) if out is None else out
            return 1.0 - a * a
        if k == "relu":
            return (z > 0).astype(np.float64)
        if k == "leaky_relu":
            return np.where(z > 0, 1.0, self.param)
        if k == "elu":
            return np.where(z > 0, 1.0, self.param * np.exp(np.minimum(z, 0.0)))
        if k == "celu":
            return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0) / self.param))
        if k == "hardswish":
            return np.where(z < -3.0, 0.0, np.where(z > 3.0, 1.0, z / 3.0 + 0.5))
        return sigmoid(z)


def softplus(z):
    return np.logaddexp(0.0, z)


def inverse_softplus(s):
    s = np.asarray(s, dtype=np.float64)
    return s + np.log(-np.expm1(-s))


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


IDENTITY = Activation("identity")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = IDENTITY

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError("layer weight", "2-D [out, in] matrix", f"{w.ndim}-D")
        if b.shape != (w.shape[0],):
            raise DimensionError("layer bias", w.shape[0], b.shape)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", Activation.parse(self.activation))


@dataclass(frozen=True)
class Mlp:
    """Feed-forward network as a tuple of dense layers."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for k in range(len(layers) - 1):
            out_k = layers[k].weight.shape[0]
            in_next = layers[k + 1].weight.shape[1]
            if out_k != in_next:
                raise DimensionError(f"input of layer {k + 1}", out_k, in_next)
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    @property
    def n_params(self):
        return sum(L.weight.size + L.bias.size for L in self.layers)

    @property
    def hidden_activation(self):
        return self.layers[0].activation if len(self.layers) > 1 else IDENTITY

    def with_params(self, params):
        """New network with the same activations and ``params`` as ``[(W, b), ...]``."""
        return Mlp(tuple(Layer(W.copy(), b.copy(), L.activation) for (W, b), L in zip(params, self.layers)))

    def params(self):
        return [(L.weight, L.bias) for L in self.layers]

    def __eq__(self, other):
        if not isinstance(other, Mlp) or len(self.layers) != len(other.layers):
            return NotImplemented if not isinstance(other, Mlp) else False
        return all(
            a.activation == b.activation
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


def init_mlp(sizes, activation="relu", seed=0, output_activation=IDENTITY):
    """Glorot-uniform weights and zero biases for layer widths ``sizes``."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"invalid layer sizes {sizes}")
    act = Activation.parse(activation)
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        last = k == len(sizes) - 2
        layers.append(Layer(W, np.zeros(fan_out), Activation.parse(output_activation) if last else act))
    return Mlp(tuple(layers))


def _forward_cache(net, X):
    """Run the net keeping per-layer (input, pre-activation, output)."""
    cache = []
    h = X
    for L in net.layers:
        z = h @ L.weight.T + L.bias
        a = L.activation(z)
        cache.append((h, z, a))
        h = a
    return h, cache


def _backward(net, cache, upstream, want_params=True, want_input=True):
    """Propagate ``upstream`` = dLoss/dOutput back through the cached pass."""
    grads = [None] * len(net.layers)
    g = upstream
    for k in range(len(net.layers) - 1, -1, -1):
        L = net.layers[k]
        h, z, a = cache[k]
        if L.activation.kind != "identity":
            g = g * L.activation.derivative(z, a)
        if want_params:
            grads[k] = (g.T @ h, g.sum(axis=0))
        if k > 0 or want_input:
            g = g @ L.weight
    return (g if want_input else None), grads


def forward(net, x):
    """Evaluate the network on one design vector or on a batch of rows."""
    X, single = as_rows(x, net.input_dim, "design")
    out, _ = _forward_cache(net, X)
    return out[0] if single else out


def grad_wrt_input(net, x, upstream):
    """Vector-Jacobian product ``upstream^T df/dx`` at ``x`` (row-wise for batches)."""
    X, single = as_rows(x, net.input_dim, "design")
    U, _ = as_rows(upstream, net.output_dim, "upstream")
    check_same_rows(X, U, "design", "upstream")
    _, cache = _forward_cache(net, X)
    gx, _ = _backward(net, cache, U, want_params=False)
    return gx[0] if single else gx


def value_and_input_grad(net, X, upstream_fn):
    """Forward ``X`` and backprop the cotangent ``upstream_fn(output)``.

    Returns ``(output, cotangent, dX)``. No validation: internal hot path.
    """
    out, cache = _forward_cache(net, X)
    U = upstream_fn(out)
    gx, _ = _backward(net, cache, U, want_params=False)
    return out, U, gx


def backprop_params(net, X, upstream):
    """Parameter gradients of ``sum(upstream * net(X))``, plus dX."""
    _, cache = _forward_cache(net, X)
    gx, grads = _backward(net, cache, upstream, want_params=True, want_input=True)
    return grads, gx


def mse_loss(pred, target):
    return float(np.mean((pred - target) ** 2))


def grad_wrt_params(net, X, Y, loss="mse"):
    """Mean squared error of the batch and its exact gradient per layer.

    The loss averages over batch rows and output dimensions. Returns
    ``(loss, [(dW, db), ...])``.
    """
    if loss != "mse":
        raise ValueError(f"unsupported loss {loss!r}")
    X, _ = as_rows(X, net.input_dim, "X")
    Y, _ = as_rows(Y, net.output_dim, "Y")
    check_same_rows(X, Y)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    out, cache = _forward_cache(net, X)
    resid = out - Y
    upstream = 2.0 * resid / resid.size
    _, grads = _backward(net, cache, upstream, want_params=True, want_input=False)
    return float(np.mean(resid**2)), grads


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-scoring of designs and performances."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def fit(cls, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        return cls(X.mean(0), _safe_std(X), Y.mean(0), _safe_std(Y))

    @classmethod
    def identity(cls, d_in, d_out):
        return cls(np.zeros(d_in), np.ones(d_in), np.zeros(d_out), np.ones(d_out))

    def normalize_x(self, X):
        return (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_std

    def denormalize_x(self, Xn):
        return np.asarray(Xn, dtype=np.float64) * self.x_std + self.x_mean

    def normalize_y(self, Y):
        return (np.asarray(Y, dtype=np.float64) - self.y_mean) / self.y_std

    def denormalize_y(self, Yn):
        return np.asarray(Yn, dtype=np.float64) * self.y_std + self.y_mean


def _safe_std(A):
    std = A.std(0)
    # constant columns keep unit scale
    return np.where(std > 0, std, 1.0)


@dataclass(frozen=True)
class Dataset:
    """Raw design/performance pairs plus the normalizer fitted to them."""

    designs: np.ndarray
    performances: np.ndarray
    normalizer: Normalizer = None

    def __post_init__(self):
        X, _ = as_rows(self.designs, what="designs")
        Y, _ = as_rows(self.performances, what="performances")
        check_same_rows(X, Y, "designs", "performances")
        if X.shape[0] < 1:
            raise ValueError("a dataset needs at least one row")
        object.__setattr__(self, "designs", X)
        object.__setattr__(self, "performances", Y)
        if self.normalizer is None:
            object.__setattr__(self, "normalizer", Normalizer.fit(X, Y))

    def __len__(self):
        return self.designs.shape[0]

    @property
    def design_dim(self):
        return self.designs.shape[1]

    @property
    def performance_dim(self):
        return self.performances.shape[1]

    @property
    def Xn(self):
        return self.normalizer.normalize_x(self.designs)

    @property
    def Yn(self):
        return self.normalizer.normalize_y(self.performances)

    def design_box(self, normalized=True):
        """Axis-aligned box ``(low, high)`` spanned by the training designs."""
        X = self.Xn if normalized else self.designs
        return X.min(0), X.max(0)

    def subset(self, idx):
        return Dataset(self.designs[idx], self.performances[idx], self.normalizer)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if isinstance(self.optimizer, str):
            object.__setattr__(self, "optimizer", OptimizerSpec(self.optimizer))
        elif isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerSpec(**self.optimizer))


def minibatches(rng, n, batch_size):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_mse(net, data, cfg):
    """Fit ``net`` to the normalized pairs of ``data`` under MSE.

    Returns ``(trained_net, history)``; ``history[e]`` is the full-data MSE
    after epoch ``e``. With ``cfg.epochs == 0`` the input network is returned.
    """
    X, Y = (data.Xn, data.Yn) if isinstance(data, Dataset) else data
    X, _ = as_rows(X, net.input_dim, "designs")
    Y, _ = as_rows(Y, net.output_dim, "performances")
    check_same_rows(X, Y)
    if cfg.epochs == 0:
        return net, []
    rng = np.random.default_rng(cfg.seed)
    opt = cfg.optimizer.build(cfg.learning_rate)
    # private copy; the optimizer updates its arrays in place
    work = net.with_params(net.params())
    params = [p for W, b in work.params() for p in (W, b)]
    history = []
    for epoch in range(cfg.epochs):
        for idx in minibatches(rng, X.shape[0], cfg.batch_size):
            out, cache = _forward_cache(work, X[idx])
            resid = out - Y[idx]
            _, grads = _backward(work, cache, 2.0 * resid / resid.size, want_input=False)
            opt.step(params, [g for pair in grads for g in pair])
        loss = mse_loss(_forward_cache(work, X)[0], Y)
        if not math.isfinite(loss):
            raise DivergenceError(epoch, "train_mse")
        history.append(loss)
    logger.debug("train_mse: %d epochs, final loss %.3e", cfg.epochs, history[-1])
    return work.with_params(work.params()), history
