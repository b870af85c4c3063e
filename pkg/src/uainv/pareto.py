"""NSGA-II over the (surrogate mismatch, weighted uncertainty) objective pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_rows, check_box
from .ensemble import UncertaintyWeights, combined_uncertainty, predict


@dataclass
class Individual:
    design: np.ndarray
    objectives: tuple
    rank: int = 0
    crowding: float = 0.0

    @property
    def mse(self):
        return self.objectives[0]

    @property
    def uncertainty_score(self):
        return self.objectives[1]


def dominates(a, b):
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere.

    Accepts :class:`Individual` objects or plain objective sequences.
    """
    fa = np.asarray(a.objectives if isinstance(a, Individual) else a, dtype=np.float64)
    fb = np.asarray(b.objectives if isinstance(b, Individual) else b, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ValueError("objective arity differs")
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def _domination_matrix(F):
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def non_dominated_sort(F):
    """Partition row indices of the objective matrix ``F`` into Pareto fronts.

    ``F`` may also be a list of :class:`Individual`. Returns a list of index
    arrays, best front first.
    """
    if isinstance(F, (list, tuple)) and F and isinstance(F[0], Individual):
        F = np.array([ind.objectives for ind in F], dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] == 0:
        raise ValueError("non_dominated_sort needs a non-empty (n, k) objective matrix")
    D = _domination_matrix(F)
    count = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    assigned = np.zeros(F.shape[0], dtype=bool)
    while current.size:
        fronts.append(current)
        assigned[current] = True
        count = count - D[current].sum(axis=0)
        current = np.flatnonzero((count == 0) & ~assigned)
    return fronts


def crowding_distance(F):
    """Crowding distance of each row of ``F`` within one front."""
    n, k = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(k):
        order = np.argsort(F[:, j], kind="stable")
        span = F[order[-1], j] - F[order[0], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (F[order[2:], j] - F[order[:-2], j]) / span
    return dist


@dataclass(frozen=True)
class Nsga2Config:
    low: np.ndarray
    high: np.ndarray
    population: int = 1000
    generations: int = 100
    eta_c: float = 15.0
    eta_m: float = 20.0
    crossover_prob: float = 0.9
    mutation_rate: float | None = None
    seed: int = 0

    def __post_init__(self):
        low, high = check_box(self.low, self.high, what="NSGA-II bounds")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")

    @classmethod
    def from_data_box(cls, low, high, expand=0.1, **kw):
        low, high = check_box(low, high)
        pad = expand * (high - low)
        return cls(low - pad, high + pad, **kw)


def _sbx(rng, p1, p2, low, high, eta, prob):
    n, d = p1.shape
    u = rng.random((n, d))
    beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta + 1)), (1 / (2 * (1 - u))) ** (1 / (eta + 1)))
    apply = (rng.random((n, 1)) < prob) & (rng.random((n, d)) < 0.5)
    c1 = 0.5 * ((1 + beta) * p1 + (1 - beta) * p2)
    c2 = 0.5 * ((1 - beta) * p1 + (1 + beta) * p2)
    c1 = np.where(apply, c1, p1)
    c2 = np.where(apply, c2, p2)
    return np.clip(c1, low, high), np.clip(c2, low, high)


def _polynomial_mutation(rng, X, low, high, eta, rate):
    n, d = X.shape
    span = high - low
    u = rng.random((n, d))
    delta1 = (X - low) / span
    delta2 = (high - X) / span
    mpow = 1.0 / (eta + 1.0)
    xy = np.where(u < 0.5, 1 - delta1, 1 - delta2)
    val = np.where(
        u < 0.5,
        2 * u + (1 - 2 * u) * xy ** (eta + 1),
        2 * (1 - u) + 2 * (u - 0.5) * xy ** (eta + 1),
    )
    dq = np.where(u < 0.5, val**mpow - 1, 1 - val**mpow)
    mutate = rng.random((n, d)) < rate
    return np.clip(np.where(mutate, X + dq * span, X), low, high)


def _rank_and_crowd(F):
    fronts = non_dominated_sort(F)
    rank = np.empty(F.shape[0], dtype=np.int64)
    crowd = np.empty(F.shape[0])
    for r, idx in enumerate(fronts):
        rank[idx] = r
        crowd[idx] = crowding_distance(F[idx])
    return fronts, rank, crowd


def _tournament(rng, rank, crowd, n):
    a = rng.integers(0, rank.size, n)
    b = rng.integers(0, rank.size, n)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


def objectives(ens, X, y_target, weights):
    """Rows of (squared mismatch summed over dims, weighted uncertainty score)."""
    p = predict(ens, X)
    mse = np.sum((p.mu - y_target) ** 2, axis=1)
    return np.stack([mse, combined_uncertainty(p, weights)], axis=1)


def nsga2_run(ens, y_target, weights, cfg, history=None):
    """Approximate the accuracy/uncertainty Pareto front for one target.

    Returns the first front of the final population as a list of
    :class:`Individual`, sorted by increasing mse. If ``history`` is a list,
    the per-generation (best mse, best uncertainty score) pairs are appended.
    """
    y, _ = as_rows(y_target, ens.output_dim, "target")
    y = y[0]
    weights = weights if isinstance(weights, UncertaintyWeights) else UncertaintyWeights(*weights)
    rng = np.random.default_rng(cfg.seed)
    low, high = cfg.low, cfg.high
    if low.shape[0] != ens.input_dim:
        raise ValueError("bounds do not match the ensemble design dimension")
    rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / ens.input_dim
    N = cfg.population
    X = low + rng.random((N, low.shape[0])) * (high - low)
    F = objectives(ens, X, y, weights)
    _, rank, crowd = _rank_and_crowd(F)
    for _ in range(cfg.generations):
        parents = _tournament(rng, rank, crowd, N)
        p1, p2 = X[parents[0::2]], X[parents[1::2]]
        c1, c2 = _sbx(rng, p1, p2, low, high, cfg.eta_c, cfg.crossover_prob)
        children = _polynomial_mutation(rng, np.concatenate([c1, c2]), low, high, cfg.eta_m, rate)
        Fc = objectives(ens, children, y, weights)
        X_all = np.concatenate([X, children])
        F_all = np.concatenate([F, Fc])
        fronts, rank_all, crowd_all = _rank_and_crowd(F_all)
        keep = []
        for idx in fronts:
            if len(keep) + idx.size <= N:
                keep.extend(idx.tolist())
            else:
                order = idx[np.argsort(-crowd_all[idx], kind="stable")]
                keep.extend(order[: N - len(keep)].tolist())
                break
        keep = np.asarray(keep)
        X, F = X_all[keep], F_all[keep]
        _, rank, crowd = _rank_and_crowd(F)
        if history is not None:
            history.append((float(F[:, 0].min()), float(F[:, 1].min())))
    front = np.flatnonzero(rank == 0)
    front = front[np.argsort(F[front, 0], kind="stable")]
    return [Individual(X[i].copy(), (float(F[i, 0]), float(F[i, 1])), 0, float(crowd[i])) for i in front]
