"""Gradient-based inversion of surrogates with multi-restart search.

All three solvers share one loop: every (target, restart) pair is a row of a
design matrix updated in lock-step, rows stop independently when their
gradient norm drops below ``grad_tol`` or their loss becomes non-finite.
Restart inits for target ``t`` come from ``default_rng([cfg.seed, t])`` so
a batched solve reproduces independent solves of each target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_rows, check_box
from .ensemble import DeepEnsemble, Prediction, UncertaintyWeights, ensemble_objective, predict
from .exceptions import DimensionError, InversionError
from .nn import Mlp, _backward, _forward_cache
from .optim import OptimizerSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UniformInDataBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low, high = check_box(self.low, self.high, what="init box")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self):
        return self.low.shape[0]

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, self.dim))


@dataclass(frozen=True)
class GaussianInit:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionError("gaussian init", "mean and std vectors of equal length", (mean.shape, std.shape))
        if np.any(std < 0):
            raise ValueError("std must be >= 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self):
        return self.mean.shape[0]

    def sample(self, rng, n):
        return self.mean + rng.normal(size=(n, self.dim)) * self.std


@dataclass(frozen=True)
class FixedInit:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64).reshape(-1))

    @property
    def dim(self):
        return self.x.shape[0]

    def sample(self, rng, n):
        return np.tile(self.x, (n, 1))


def boundary_loss(x, mu_x, R_x):
    """Sum over dims of ``relu(|x - mu_x| - R_x / 2)`` and its (sub)gradient.

    Works row-wise on batches. The gradient is 0 inside the box and on its
    faces, ``sign(x - mu_x)`` outside.
    """
    X, single = as_rows(x, what="design")
    mu_x = np.asarray(mu_x, dtype=np.float64)
    R_x = np.asarray(R_x, dtype=np.float64)
    if mu_x.shape != (X.shape[1],) or R_x.shape != (X.shape[1],):
        raise DimensionError("boundary box", X.shape[1], (mu_x.shape, R_x.shape))
    value, grad = _boundary(X, mu_x, R_x)
    return (float(value[0]), grad[0]) if single else (value, grad)


def _boundary(X, mu_x, R_x):
    d = X - mu_x
    excess = np.abs(d) - 0.5 * R_x
    value = np.sum(np.maximum(excess, 0.0), axis=1)
    grad = np.where(excess > 0, np.sign(d), 0.0)
    return value, grad


def smoothness_reg(x, skip_indices=()):
    """Sum of squared half-difference curvature over interior indices.

    For interior position ``i`` (0-based, ``0 < i < n-1``) the term is
    ``((x[i+1] - x[i]) / 2 - (x[i] - x[i-1]) / 2) ** 2``; positions listed in
    ``skip_indices`` are left out.
    """
    X, single = as_rows(x, what="design")
    if X.shape[1] < 3:
        raise DimensionError("smoothness_reg design", ">= 3", X.shape[1])
    value, grad = _smoothness(X, _interior_mask(X.shape[1], skip_indices))
    return (float(value[0]), grad[0]) if single else (value, grad)


def paired_skip_indices(n):
    """0-based interior positions ``n/2`` and ``n/2 + 1`` (1-based) for even ``n``."""
    return frozenset({n // 2 - 1, n // 2}) if n % 2 == 0 else frozenset()


def _interior_mask(n, skip_indices):
    keep = np.ones(n - 2, dtype=bool)
    for i in skip_indices:
        if 0 < i < n - 1:
            keep[i - 1] = False
    return keep


def _smoothness(X, keep):
    c = 0.5 * (X[:, 2:] - 2.0 * X[:, 1:-1] + X[:, :-2])
    c = np.where(keep, c, 0.0)
    value = np.sum(c * c, axis=1)
    # d/dx of sum c_i^2 with c_i = (x_{i+1} - 2 x_i + x_{i-1}) / 2
    g = np.zeros_like(X)
    g[:, 2:] += c
    g[:, 1:-1] -= 2.0 * c
    g[:, :-2] += c
    return value, g


@dataclass(frozen=True)
class BoundaryReg:
    mu_x: np.ndarray
    R_x: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        mu_x = np.asarray(self.mu_x, dtype=np.float64)
        R_x = np.asarray(self.R_x, dtype=np.float64)
        if mu_x.shape != R_x.shape:
            raise DimensionError("boundary R_x", mu_x.shape, R_x.shape)
        if np.any(R_x <= 0):
            raise ValueError("R_x entries must be > 0")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("regularizer weight must be finite and >= 0")
        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "R_x", R_x)

    @classmethod
    def from_box(cls, low, high, weight=1.0):
        low, high = check_box(low, high)
        return cls(0.5 * (low + high), high - low, weight)

    def __call__(self, X):
        return _boundary(X, self.mu_x, self.R_x)


@dataclass(frozen=True)
class SmoothnessReg:
    skip_indices: frozenset = frozenset()
    weight: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("regularizer weight must be finite and >= 0")
        object.__setattr__(self, "skip_indices", frozenset(int(i) for i in self.skip_indices))

    def __call__(self, X):
        return _smoothness(X, _interior_mask(X.shape[1], self.skip_indices))


@dataclass(frozen=True)
class InversionConfig:
    """Settings shared by :func:`na_invert`, :func:`uana_invert` and :func:`na_ensemble_invert`.

    ``init`` must be a :class:`UniformInDataBox`, :class:`GaussianInit` or
    :class:`FixedInit` in the surrogate's design space. ``select`` is
    ``"surrogate_error"`` or ``"total_loss"``.
    """

    init: object
    step_size: float = 0.01
    max_iters: int = 2000
    restarts: int = 50
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    uncertainty_weights: UncertaintyWeights = field(default_factory=UncertaintyWeights)
    regularizers: tuple = ()
    seed: int = 0
    grad_tol: float = 1e-9
    select: str = "surrogate_error"
    record_trace: bool = False
    line_search: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if self.select not in ("surrogate_error", "total_loss"):
            raise ValueError(f"unknown selection criterion {self.select!r}")
        if isinstance(self.optimizer, str):
            object.__setattr__(self, "optimizer", OptimizerSpec(self.optimizer))
        object.__setattr__(self, "regularizers", tuple(self.regularizers))


@dataclass(frozen=True)
class Candidate:
    design: np.ndarray
    surrogate_error: float
    uncertainty: Prediction | None
    total_loss: float
    restart_index: int
    iterations_used: int
    failed: bool = False


@dataclass(frozen=True)
class InversionOutcome:
    best: Candidate
    all_candidates: tuple
    trace: tuple | None = None


def select_best(candidates, criterion="surrogate_error"):
    """Lowest criterion among non-failed candidates; ties go to the lowest restart index."""
    pool = [c for c in candidates if not c.failed]
    if not pool:
        raise InversionError("no successful candidate to select from")
    key = (lambda c: c.surrogate_error) if criterion == "surrogate_error" else (lambda c: c.total_loss)
    return min(pool, key=lambda c: (key(c), c.restart_index))


def _mlp_objective(net):
    def objective(X, Y):
        out, cache = _forward_cache(net, X)
        resid = out - Y
        g, _ = _backward(net, cache, 2.0 * resid, want_params=False)
        return np.sum(resid * resid, axis=1), g

    return objective


def _ensemble_objective(ens, w):
    def objective(X, Y):
        return ensemble_objective(ens, X, Y, w)

    return objective


def _with_regularizers(objective, regularizers):
    if not regularizers:
        return objective

    def total(X, Y):
        loss, grad = objective(X, Y)
        for reg in regularizers:
            v, g = reg(X)
            loss = loss + reg.weight * v
            grad = grad + reg.weight * g
        return loss, grad

    return total


def _initial_designs(cfg, target_ids, dim):
    if cfg.init.dim != dim:
        raise DimensionError("init", dim, cfg.init.dim)
    parts = [cfg.init.sample(np.random.default_rng([int(cfg.seed), int(t)]), cfg.restarts) for t in target_ids]
    return np.concatenate(parts, axis=0)


def _optimize(objective, X, Y, cfg):
    """Run the lock-step loop; returns final X, per-row iterations, failed flags, traces."""
    n = X.shape[0]
    active = np.ones(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    iters = np.full(n, cfg.max_iters, dtype=np.int64)
    traces = [[] for _ in range(n)] if cfg.record_trace else None
    opt = cfg.optimizer.build(cfg.step_size)
    lr = np.full(n, cfg.step_size)
    for it in range(cfg.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        loss, grad = objective(X[idx], Y[idx])
        bad = ~np.isfinite(loss) | ~np.all(np.isfinite(grad), axis=1)
        if traces is not None:
            for j, r in enumerate(idx):
                traces[r].append(loss[j])
        gnorm = np.sqrt(np.sum(grad * grad, axis=1))
        done = (gnorm < cfg.grad_tol) & ~bad
        failed[idx[bad]] = True
        stop = bad | done
        iters[idx[stop]] = it
        active[idx[stop]] = False
        go = ~stop
        if not np.any(go):
            continue
        rows, loss, grad = idx[go], loss[go], grad[go]
        if cfg.line_search and cfg.optimizer.name == "sgd":
            _backtracking_step(objective, X, Y, rows, loss, grad, lr, active, iters, it)
        else:
            full_grad = np.zeros_like(X)
            full_grad[rows] = grad
            mask = np.zeros(n, dtype=bool)
            mask[rows] = True
            opt.step([X], [full_grad], mask=mask)
    return X, iters, failed, traces


def _backtracking_step(objective, X, Y, rows, loss, grad, lr, active, iters, it, max_halvings=40):
    pending = np.arange(rows.size)
    for _ in range(max_halvings):
        r = rows[pending]
        trial = X[r] - lr[r, None] * grad[pending]
        new_loss, _ = objective(trial, Y[r])
        ok = np.isfinite(new_loss) & (new_loss <= loss[pending])
        X[r[ok]] = trial[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return
        lr[rows[pending]] *= 0.5
    # no descent step found: treat as converged
    stuck = rows[pending]
    active[stuck] = False
    iters[stuck] = it


def _invert(objective, predict_fn, y_target, cfg, d_in, d_out, target_ids):
    Yt, single = as_rows(y_target, d_out, "target")
    T, R = Yt.shape[0], cfg.restarts
    target_ids = list(range(T)) if target_ids is None else [int(t) for t in target_ids]
    if len(target_ids) != T:
        raise DimensionError("target_ids", T, len(target_ids))
    X = _initial_designs(cfg, target_ids, d_in)
    Y = np.repeat(Yt, R, axis=0)
    full = _with_regularizers(objective, cfg.regularizers)
    X, iters, failed, traces = _optimize(full, X, Y, cfg)
    final_loss, _ = full(X, Y)
    mu, unc = predict_fn(X)
    sq_err = np.sum((mu - Y) ** 2, axis=1)
    failed = failed | ~np.isfinite(final_loss) | ~np.isfinite(sq_err)
    outcomes = []
    for t in range(T):
        cands = []
        for r in range(R):
            i = t * R + r
            cands.append(
                Candidate(
                    design=X[i].copy(),
                    surrogate_error=float(sq_err[i]),
                    uncertainty=None if unc is None else Prediction(unc.mu[i], unc.sigma_aleatoric[i], unc.sigma_epistemic[i]),
                    total_loss=float(final_loss[i]),
                    restart_index=r,
                    iterations_used=int(iters[i]),
                    failed=bool(failed[i]),
                )
            )
        if all(c.failed for c in cands):
            raise InversionError(f"all {R} restarts failed for target {target_ids[t]}")
        trace = None if traces is None else tuple(np.asarray(traces[t * R + r]) for r in range(R))
        outcomes.append(InversionOutcome(select_best(cands, cfg.select), tuple(cands), trace))
    return outcomes[0] if single else outcomes


def na_invert(surrogate, y_target, cfg, target_ids=None):
    """Minimize ``||f(x) - y*||^2`` over designs with a single network ``f``.

    ``y_target`` is one target vector (returns an :class:`InversionOutcome`)
    or a ``(T, D_out)`` matrix (returns a list).
    """
    if not isinstance(surrogate, Mlp):
        raise TypeError("na_invert expects an Mlp surrogate")

    def predict_fn(X):
        return _forward_cache(surrogate, X)[0], None

    return _invert(_mlp_objective(surrogate), predict_fn, y_target, cfg, surrogate.input_dim, surrogate.output_dim, target_ids)


def _invert_ensemble(ens, y_target, cfg, w, target_ids):
    if not isinstance(ens, DeepEnsemble):
        raise TypeError("expected a DeepEnsemble surrogate")

    def predict_fn(X):
        p = predict(ens, X)
        return p.mu, p

    return _invert(_ensemble_objective(ens, w), predict_fn, y_target, cfg, ens.input_dim, ens.output_dim, target_ids)


def uana_invert(ens, y_target, cfg, target_ids=None):
    """Minimize ``||mu(x) - y*||^2 + alpha * aleatoric(x) + beta * epistemic(x)`` (+ regularizers)."""
    return _invert_ensemble(ens, y_target, cfg, cfg.uncertainty_weights, target_ids)


def na_ensemble_invert(ens, y_target, cfg, target_ids=None):
    """Minimize ``||mu(x) - y*||^2`` on the ensemble mean, ignoring uncertainty weights."""
    return _invert_ensemble(ens, y_target, cfg, UncertaintyWeights(0.0, 0.0), target_ids)


def best_designs(outcomes):
    if isinstance(outcomes, InversionOutcome):
        outcomes = [outcomes]
    return np.stack([o.best.design for o in outcomes])
