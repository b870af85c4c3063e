"""Deep Ensembles surrogate with aleatoric/epistemic decomposition.

Each member pairs a mean network with a variance network whose raw output
``r`` becomes ``softplus(r) + variance_floor``. The ensemble is summarized
per output dimension as

* ``mu``                mean of member means,
* ``sigma_aleatoric``   mean of member variances,
* ``sigma_epistemic``   mean of squared member deviations from ``mu``,

so that ``sigma_aleatoric + sigma_epistemic`` is the variance of the
uniform Gaussian mixture. Both uncertainty fields are variances even though
they carry the customary ``sigma`` name.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rows, check_same_rows
from .exceptions import DimensionError, DivergenceError
from .nn import (
    Activation,
    Dataset,
    Layer,
    Mlp,
    TrainConfig,
    _backward,
    _forward_cache,
    init_mlp,
    inverse_softplus,
    minibatches,
    sigmoid,
    softplus,
    train_mse,
)

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6

# Same multiset as the usual 10-member roster (Tanh, ReLU, CELU, LeakyReLU x2;
# ELU, Hardswish x1), ordered so that every prefix is as diverse as possible.
DEFAULT_ROSTER = tuple(
    Activation.parse(a)
    for a in ("tanh", "relu", "celu", "leaky_relu", "elu", "hardswish", "tanh", "relu", "celu", "leaky_relu")
)


def default_roster(n_members):
    return tuple(DEFAULT_ROSTER[m % len(DEFAULT_ROSTER)] for m in range(n_members))


@dataclass(frozen=True)
class UncertaintyWeights:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def is_zero(self):
        return self.alpha == 0.0 and self.beta == 0.0


@dataclass(frozen=True)
class EnsembleMember:
    mean_net: Mlp
    var_net: Mlp

    def __post_init__(self):
        if self.mean_net.input_dim != self.var_net.input_dim:
            raise DimensionError("var_net input", self.mean_net.input_dim, self.var_net.input_dim)
        if self.mean_net.output_dim != self.var_net.output_dim:
            raise DimensionError("var_net output", self.mean_net.output_dim, self.var_net.output_dim)


@dataclass(frozen=True)
class DeepEnsemble:
    members: tuple
    variance_floor: float = VARIANCE_FLOOR

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise ValueError("a DeepEnsemble needs at least 2 members")
        d_in, d_out = members[0].mean_net.input_dim, members[0].mean_net.output_dim
        for m in members[1:]:
            if m.mean_net.input_dim != d_in or m.mean_net.output_dim != d_out:
                raise DimensionError("ensemble member dims", (d_in, d_out), (m.mean_net.input_dim, m.mean_net.output_dim))
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")
        object.__setattr__(self, "members", members)

    @property
    def M(self):
        return len(self.members)

    @property
    def input_dim(self):
        return self.members[0].mean_net.input_dim

    @property
    def output_dim(self):
        return self.members[0].mean_net.output_dim

    @property
    def roster(self):
        return tuple(m.mean_net.hidden_activation for m in self.members)

    def subset(self, n_members):
        """The ensemble made of the first ``n_members`` members."""
        return DeepEnsemble(self.members[:n_members], self.variance_floor)

    @classmethod
    def clone(cls, mean_net, n_members=2, var_net=None, variance_floor=VARIANCE_FLOOR):
        """``n_members`` copies of one network (zero epistemic spread)."""
        if var_net is None:
            sizes = [mean_net.input_dim, mean_net.output_dim]
            var_net = init_mlp(sizes, "identity", seed=0)
        return cls(tuple(EnsembleMember(mean_net, var_net) for _ in range(n_members)), variance_floor)


@dataclass(frozen=True)
class Prediction:
    mu: np.ndarray
    sigma_aleatoric: np.ndarray
    sigma_epistemic: np.ndarray

    @property
    def total_variance(self):
        return self.sigma_aleatoric + self.sigma_epistemic


def nll_loss(mu, sigma2, y):
    """Gaussian negative log likelihood (without the constant), averaged over dims."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (mu.shape == sigma2.shape == y.shape):
        raise DimensionError("nll_loss operands", mu.shape, (sigma2.shape, y.shape))
    if np.any(sigma2 <= 0):
        raise ValueError("nll_loss: variance must be positive")
    return float(np.mean(0.5 * np.log(sigma2) + 0.5 * (y - mu) ** 2 / sigma2))


def _mean_exact(stack):
    """Mean over axis 0 that is bitwise exact when all slices are identical."""
    return stack[0] + np.mean(stack - stack[0], axis=0)


def _member_moments(ens, X):
    mus = np.stack([_forward_cache(m.mean_net, X)[0] for m in ens.members])
    raws = np.stack([_forward_cache(m.var_net, X)[0] for m in ens.members])
    return mus, softplus(raws) + ens.variance_floor


def _summarize(ens, mus, variances):
    mu = _mean_exact(mus)
    sa = np.mean(variances, axis=0)
    # equals mean(mu_m^2) - mu^2 without the cancellation; clamp is belt-and-braces
    se = np.maximum(np.mean((mus - mu) ** 2, axis=0), 0.0)
    return mu, sa, se


def predict(ens, x):
    """Ensemble mean, aleatoric and epistemic variance at ``x`` (vector or rows)."""
    X, single = as_rows(x, ens.input_dim, "design")
    mu, sa, se = _summarize(ens, *_member_moments(ens, X))
    if single:
        return Prediction(mu[0], sa[0], se[0])
    return Prediction(mu, sa, se)


def mixture_variance(ens, x):
    """Variance of the Gaussian mixture written directly as E[s + mu^2] - E[mu]^2."""
    X, single = as_rows(x, ens.input_dim, "design")
    mus, variances = _member_moments(ens, X)
    mu = mus.mean(0)
    v = np.mean(variances + mus**2, axis=0) - mu**2
    return v[0] if single else v


def combined_uncertainty(pred, w):
    """``alpha * sum(aleatoric) + beta * sum(epistemic)`` over output dims."""
    sa = np.asarray(pred.sigma_aleatoric)
    se = np.asarray(pred.sigma_epistemic)
    out = w.alpha * sa.sum(axis=-1) + w.beta * se.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def ensemble_objective(ens, X, Y, w):
    """Row-wise UANA loss and its design gradient, unvalidated hot path.

    loss = ||mu - y||^2 + alpha * sum(aleatoric) + beta * sum(epistemic).
    The gradient is assembled from every member's own backward pass: member
    ``m`` receives the cotangent of the loss with respect to its outputs.
    Weights of exactly zero skip the corresponding work, which keeps the
    zero-weight objective bit-identical to plain surrogate matching.
    """
    M = ens.M
    mean_caches, mus = [], []
    for m in ens.members:
        out, cache = _forward_cache(m.mean_net, X)
        mus.append(out)
        mean_caches.append(cache)
    mus = np.stack(mus)
    mu = _mean_exact(mus)
    resid = mu - Y
    loss = np.sum(resid * resid, axis=1)
    dev = mus - mu
    if w.beta != 0.0:
        loss = loss + w.beta * np.sum(np.mean(dev * dev, axis=0), axis=1)
    grads = []
    for k, member in enumerate(ens.members):
        # M times d(loss)/d(mu_k); the 1/M comes back through the exact mean below
        cot = 2.0 * resid
        if w.beta != 0.0:
            cot = cot + 2.0 * w.beta * dev[k]
        g, _ = _backward(member.mean_net, mean_caches[k], cot, want_params=False)
        grads.append(g)
    if w.alpha != 0.0:
        sa = 0.0
        for k, member in enumerate(ens.members):
            raw, cache = _forward_cache(member.var_net, X)
            sa = sa + softplus(raw) + ens.variance_floor
            gv, _ = _backward(member.var_net, cache, w.alpha * sigmoid(raw), want_params=False)
            grads[k] = grads[k] + gv
        loss = loss + w.alpha * np.sum(sa / M, axis=1)
    grad = _mean_exact(np.stack(grads))
    return loss, grad


def grad_uana_objective(ens, x, y_target, w):
    """Validated wrapper around :func:`ensemble_objective` for one design or rows."""
    X, single = as_rows(x, ens.input_dim, "design")
    Y, _ = as_rows(y_target, ens.output_dim, "target")
    if Y.shape[0] == 1 and X.shape[0] > 1:
        Y = np.broadcast_to(Y, (X.shape[0], Y.shape[1]))
    check_same_rows(X, Y, "design", "target")
    loss, grad = ensemble_objective(ens, X, Y, w)
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


@dataclass(frozen=True)
class EnsembleTrainConfig:
    """Settings for :func:`train_ensemble`."""

    n_members: int = 10
    mean_hidden: tuple = (64, 64)
    var_hidden: tuple = (32, 32)
    var_activation: str = "tanh"
    stage1: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=3e-3, epochs=150))
    stage2: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=3e-3, epochs=100))
    finetune_lr_factor: float = 0.1
    variance_floor: float = VARIANCE_FLOOR
    seed: int = 0

    def __post_init__(self):
        if self.n_members < 2:
            raise ValueError("n_members must be >= 2")
        object.__setattr__(self, "mean_hidden", tuple(int(h) for h in self.mean_hidden))
        object.__setattr__(self, "var_hidden", tuple(int(h) for h in self.var_hidden))
        for name in ("stage1", "stage2"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, TrainConfig(**v))


def member_seeds(seed, index):
    """Seeds for (mean init, stage-1 shuffle, var init, stage-2 shuffle) of member ``index``.

    They depend only on the master seed and the member index, so an ensemble
    of M members is the M-prefix of any larger ensemble with the same seed.
    """
    ss = np.random.SeedSequence([int(seed), int(index)])
    return [int(s) for s in ss.generate_state(4, dtype=np.uint32)]


def _stage2(member, X, Y, cfg, shuffle_seed, finetune_lr, floor, index):
    mean_net = member.mean_net.with_params(member.mean_net.params())
    var_net = member.var_net.with_params(member.var_net.params())
    mean_params = [p for W, b in mean_net.params() for p in (W, b)]
    var_params = [p for W, b in var_net.params() for p in (W, b)]
    mean_opt = cfg.optimizer.build(finetune_lr)
    var_opt = cfg.optimizer.build(cfg.learning_rate)
    rng = np.random.default_rng(shuffle_seed)
    for epoch in range(cfg.epochs):
        for idx in minibatches(rng, X.shape[0], cfg.batch_size):
            xb, yb = X[idx], Y[idx]
            mu, mcache = _forward_cache(mean_net, xb)
            raw, vcache = _forward_cache(var_net, xb)
            s = softplus(raw) + floor
            n = mu.size
            r = mu - yb
            g_mu = r / s / n
            g_s = (0.5 / s - 0.5 * r * r / (s * s)) / n
            _, gm = _backward(mean_net, mcache, g_mu, want_input=False)
            _, gv = _backward(var_net, vcache, g_s * sigmoid(raw), want_input=False)
            mean_opt.step(mean_params, [g for pair in gm for g in pair])
            var_opt.step(var_params, [g for pair in gv for g in pair])
        mu = _forward_cache(mean_net, X)[0]
        s = softplus(_forward_cache(var_net, X)[0]) + floor
        loss = float(np.mean(0.5 * np.log(s) + 0.5 * (Y - mu) ** 2 / s))
        if not math.isfinite(loss):
            raise DivergenceError(epoch, f"nll member {index}")
    return EnsembleMember(mean_net.with_params(mean_net.params()), var_net.with_params(var_net.params()))


def train_ensemble(data, cfg=None, roster=None):
    """Train a :class:`DeepEnsemble` on the normalized pairs of ``data``.

    1. each mean network is fitted alone under MSE;
    2. each variance network is trained, and its mean network fine-tuned,
       jointly under the NLL; the variance output bias starts at the
       stage-1 residual variance;
    3. the members are assembled into the ensemble.

    Stage 2 uses ``cfg.stage2.learning_rate`` for the variance networks and
    ``cfg.stage1.learning_rate * cfg.finetune_lr_factor`` for the mean
    networks.
    """
    from dataclasses import replace

    cfg = cfg or EnsembleTrainConfig()
    roster = tuple(Activation.parse(a) for a in (roster or default_roster(cfg.n_members)))
    if len(roster) != cfg.n_members:
        raise ValueError(f"roster has {len(roster)} entries for {cfg.n_members} members")
    X, Y = (data.Xn, data.Yn) if isinstance(data, Dataset) else data
    X, _ = as_rows(X, what="designs")
    Y, _ = as_rows(Y, what="performances")
    check_same_rows(X, Y)
    d_in, d_out = X.shape[1], Y.shape[1]
    members = []
    for m, act in enumerate(roster):
        s_mean, s_shuffle1, s_var, s_shuffle2 = member_seeds(cfg.seed, m)
        mean_net = init_mlp([d_in, *cfg.mean_hidden, d_out], act, seed=s_mean)
        mean_net, _ = train_mse(mean_net, (X, Y), replace(cfg.stage1, seed=s_shuffle1))
        resid_var = np.mean((_forward_cache(mean_net, X)[0] - Y) ** 2, axis=0)
        var_net = init_mlp([d_in, *cfg.var_hidden, d_out], cfg.var_activation, seed=s_var)
        last = var_net.layers[-1]
        start = inverse_softplus(np.maximum(resid_var - cfg.variance_floor, 1e-6))
        var_net = Mlp(var_net.layers[:-1] + (Layer(last.weight, start, last.activation),))
        member = _stage2(
            EnsembleMember(mean_net, var_net),
            X,
            Y,
            cfg.stage2,
            s_shuffle2,
            cfg.stage1.learning_rate * cfg.finetune_lr_factor,
            cfg.variance_floor,
            m,
        )
        members.append(member)
        logger.debug("member %d (%s) trained", m, act.name)
    return DeepEnsemble(tuple(members), cfg.variance_floor)


def member_nll(member, X, Y, floor=VARIANCE_FLOOR):
    mu = _forward_cache(member.mean_net, X)[0]
    s = softplus(_forward_cache(member.var_net, X)[0]) + floor
    return nll_loss(mu, s, Y)
