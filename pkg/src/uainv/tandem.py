"""Inverse networks trained through a frozen forward surrogate.

The inverse net maps performances to designs. Plain tandem training minimizes
``||f(g(y)) - y||^2`` for a single forward network ``f``; the
uncertainty-aware variant replaces ``f`` with the ensemble mean and adds the
weighted aleatoric and epistemic variances at ``g(y)``. Forward models are
only read, never updated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rows
from .ensemble import DeepEnsemble, UncertaintyWeights
from .exceptions import DivergenceError
from .inversion import _ensemble_objective, _mlp_objective
from .nfp import nfp_error
from .nn import Mlp, TrainConfig, _backward, _forward_cache, init_mlp, minibatches


@dataclass(frozen=True)
class InverseNet:
    net: Mlp

    @property
    def performance_dim(self):
        return self.net.input_dim

    @property
    def design_dim(self):
        return self.net.output_dim


@dataclass(frozen=True)
class TandemTrainConfig:
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=1e-3, epochs=100))
    hidden: tuple = (64, 64)
    activation: str = "relu"
    uncertainty_weights: UncertaintyWeights = field(default_factory=UncertaintyWeights)
    candidate_count: int = 5
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig(**self.train))


def _train_inverse(objective, targets, d_in, cfg, seed):
    """Shared loop: ``objective(X, Y) -> (row losses, dLoss/dX)``."""
    Y, _ = as_rows(targets, what="targets")
    if Y.shape[0] == 0:
        raise ValueError("no training targets")
    tc = cfg.train
    seed = tc.seed if seed is None else seed
    init_seed, shuffle_seed = np.random.SeedSequence(int(seed)).generate_state(2)
    net = init_mlp([Y.shape[1], *cfg.hidden, d_in], cfg.activation, seed=int(init_seed))
    params = [p for W, b in net.params() for p in (W, b)]
    opt = tc.optimizer.build(tc.learning_rate)
    rng = np.random.default_rng(int(shuffle_seed))
    history = []
    for epoch in range(tc.epochs):
        total = 0.0
        for idx in minibatches(rng, Y.shape[0], tc.batch_size):
            yb = Y[idx]
            xb, cache = _forward_cache(net, yb)
            loss, gx = objective(xb, yb)
            _, grads = _backward(net, cache, gx / yb.shape[0], want_input=False)
            opt.step(params, [g for pair in grads for g in pair])
            total += float(np.sum(loss))
        mean_loss = total / Y.shape[0]
        if not math.isfinite(mean_loss):
            raise DivergenceError(epoch, "tandem")
        history.append(mean_loss)
    return InverseNet(net.with_params(net.params())), history


def train_tandem(forward, targets, cfg=None, seed=None):
    """Train an inverse net against the frozen network ``forward``.

    ``targets`` are performances in the forward model's (normalized) space.
    Returns ``(InverseNet, history)`` where ``history`` holds the mean
    per-epoch training loss; zero epochs return the untrained net.
    """
    cfg = cfg or TandemTrainConfig()
    return _train_inverse(_mlp_objective(forward), targets, forward.input_dim, cfg, seed)


def train_ua_tandem(ens, targets, cfg=None, seed=None):
    """Train an inverse net against the frozen ensemble with uncertainty penalties."""
    cfg = cfg or TandemTrainConfig()
    if not isinstance(ens, DeepEnsemble):
        raise TypeError("train_ua_tandem expects a DeepEnsemble")
    return _train_inverse(_ensemble_objective(ens, cfg.uncertainty_weights), targets, ens.input_dim, cfg, seed)


def query(inv, y_target):
    """Designs proposed by ``inv`` for one target or for rows of targets (one forward pass)."""
    Y, single = as_rows(y_target, inv.performance_dim, "target")
    X = _forward_cache(inv.net, Y)[0]
    return X[0] if single else X


def score_inverse_models(candidates, nfp, validation_targets, normalizer=None):
    """Mean NFP error of every candidate on ``validation_targets``.

    With a normalizer the targets are raw performances and the inverse nets
    live in normalized space; NFP errors are measured in normalized units.
    """
    Yv, _ = as_rows(validation_targets, what="validation targets")
    Yq = Yv if normalizer is None else normalizer.normalize_y(Yv)
    scores = []
    for inv in candidates:
        X = query(inv, Yq)
        if normalizer is not None:
            X = normalizer.denormalize_x(X)
        scores.append(float(np.mean(nfp_error(nfp, X, Yv, normalizer))))
    return scores


def select_inverse_model(candidates, nfp, validation_targets, normalizer=None):
    """Candidate with the lowest mean validation NFP error (first wins ties)."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no inverse models to select from")
    scores = score_inverse_models(candidates, nfp, validation_targets, normalizer)
    return candidates[int(np.argmin(scores))]
