"""Analytic forward processes, corrupted dataset sampling and error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import as_rows
from .exceptions import DimensionError, SamplingError
from .nn import Dataset, Normalizer


@dataclass(frozen=True)
class RobotArm:
    """Planar arm on a vertically sliding base.

    Design ``(base, t1, t2, t3)``; performance is the tip position
    ``(sum_i l_i cos(phi_i), base + sum_i l_i sin(phi_i))`` with
    ``phi_i = t1 + ... + ti``. The prior is Gaussian, clipped to ``box``.
    """

    segment_lengths: tuple = (0.5, 0.5, 1.0)
    base_std: float = 0.25
    angle_std: float = math.pi / 2
    box: tuple = ((-1.0, -math.pi, -math.pi, -math.pi), (1.0, math.pi, math.pi, math.pi))
    kind: str = field(default="robot_arm", init=False)
    design_dim = 4
    performance_dim = 2

    def __post_init__(self):
        if len(self.segment_lengths) != 3:
            raise DimensionError("segment_lengths", 3, len(self.segment_lengths))
        object.__setattr__(self, "segment_lengths", tuple(float(v) for v in self.segment_lengths))
        object.__setattr__(self, "box", tuple(tuple(float(v) for v in b) for b in self.box))

    def forward(self, X):
        phi = np.cumsum(X[:, 1:], axis=1)
        lengths = np.asarray(self.segment_lengths)
        reach = np.cos(phi) @ lengths
        height = X[:, 0] + np.sin(phi) @ lengths
        return np.stack([reach, height], axis=1)

    def sample_prior(self, rng, n):
        std = np.array([self.base_std] + [self.angle_std] * 3)
        X = rng.normal(size=(n, 4)) * std
        return np.clip(X, *map(np.asarray, self.box))


@dataclass(frozen=True)
class Sine1D:
    """``y = amplitude * sin(2 pi frequency x)`` with a uniform prior on ``[low, high]``."""

    amplitude: float = 1.0
    frequency: float = 0.5
    low: float = -1.0
    high: float = 1.0
    kind: str = field(default="sine1d", init=False)
    design_dim = 1
    performance_dim = 1

    def forward(self, X):
        return self.amplitude * np.sin(2.0 * math.pi * self.frequency * X)

    def sample_prior(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, 1))


@dataclass(frozen=True)
class Toy2D:
    """``(x, y) -> (2x, x^2 + y^2)`` with a uniform prior on ``[low, high]^2``."""

    low: float = -1.0
    high: float = 1.0
    kind: str = field(default="toy2d", init=False)
    design_dim = 2
    performance_dim = 2

    def forward(self, X):
        return np.stack([2.0 * X[:, 0], X[:, 0] ** 2 + X[:, 1] ** 2], axis=1)

    def sample_prior(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, 2))


_KINDS = {"robot_arm": RobotArm, "sine1d": Sine1D, "toy2d": Toy2D}


def nfp_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    return _KINDS[kind](**d)


def nfp_to_dict(spec):
    d = asdict(spec)
    d["kind"] = spec.kind
    return d


@dataclass(frozen=True)
class Region:
    """Conjunction of open per-dimension intervals ``lo < x[dim] < hi``."""

    intervals: tuple

    def __post_init__(self):
        items = self.intervals.items() if isinstance(self.intervals, dict) else self.intervals
        norm = []
        for dim, (lo, hi) in items:
            lo = -math.inf if lo is None else float(lo)
            hi = math.inf if hi is None else float(hi)
            if not lo < hi:
                raise ValueError(f"region interval on dim {dim} is empty: ({lo}, {hi})")
            norm.append((int(dim), (lo, hi)))
        object.__setattr__(self, "intervals", tuple(sorted(norm)))

    def contains(self, X):
        X = np.atleast_2d(X)
        inside = np.ones(X.shape[0], dtype=bool)
        for dim, (lo, hi) in self.intervals:
            inside &= (X[:, dim] > lo) & (X[:, dim] < hi)
        return inside

    def to_list(self):
        return [[d, [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]] for d, (lo, hi) in self.intervals]


@dataclass(frozen=True)
class CorruptionSpec:
    """Gaussian performance noise inside ``noise_regions`` and no samples inside ``sparse_regions``.

    ``noise_regions`` holds ``(Region, std)`` pairs.
    """

    noise_regions: tuple = ()
    sparse_regions: tuple = ()

    def __post_init__(self):
        noise = tuple((r if isinstance(r, Region) else Region(r), float(s)) for r, s in self.noise_regions)
        for _, s in noise:
            if not s >= 0:
                raise ValueError("noise std must be >= 0")
        sparse = tuple(r if isinstance(r, Region) else Region(r) for r in self.sparse_regions)
        object.__setattr__(self, "noise_regions", noise)
        object.__setattr__(self, "sparse_regions", sparse)

    def excluded(self, X):
        out = np.zeros(X.shape[0], dtype=bool)
        for r in self.sparse_regions:
            out |= r.contains(X)
        return out

    def to_dict(self):
        return {
            "noise_regions": [[r.to_list(), s] for r, s in self.noise_regions],
            "sparse_regions": [r.to_list() for r in self.sparse_regions],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple((Region(tuple((k, tuple(v)) for k, v in r)), s) for r, s in d.get("noise_regions", ())),
            tuple(Region(tuple((k, tuple(v)) for k, v in r)) for r in d.get("sparse_regions", ())),
        )


NO_CORRUPTION = CorruptionSpec()


@dataclass(frozen=True)
class SampledDataset:
    data: Dataset
    seed: int
    spec: object
    corruption: CorruptionSpec
    n: int

    @property
    def normalizer(self):
        return self.data.normalizer


def nfp_forward(spec, x):
    """Noiseless forward process on one design or on rows."""
    X, single = as_rows(x, spec.design_dim, "design")
    Y = spec.forward(X)
    return Y[0] if single else Y


MAX_OVERSAMPLING = 100


def sample_dataset(spec, n, seed=0, corruption=NO_CORRUPTION):
    """Draw ``n`` pairs from the prior of ``spec``, applying ``corruption``.

    Designs inside a sparse region are rejected (at most ``100 * n`` draws in
    total). Noise is added to raw performances before normalization.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    design_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(2))
    kept, drawn = [], 0
    have = 0
    while have < n:
        if drawn >= MAX_OVERSAMPLING * n:
            raise SamplingError(f"only {have} of {n} admissible designs after {drawn} draws")
        batch = min(max(n - have, 1) * 2, MAX_OVERSAMPLING * n - drawn)
        X = spec.sample_prior(design_rng, batch)
        drawn += batch
        X = X[~corruption.excluded(X)]
        kept.append(X)
        have += X.shape[0]
    X = np.concatenate(kept)[:n]
    Y = spec.forward(X)
    for region, std in corruption.noise_regions:
        inside = region.contains(X)
        noise = noise_rng.normal(size=Y.shape) * std
        Y = Y + np.where(inside[:, None], noise, 0.0)
    return SampledDataset(Dataset(X, Y), int(seed), spec, corruption, n)


def sample_targets(spec, n, seed):
    """Target performances: noiseless images of designs drawn from the clean prior."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919]))
    X = spec.sample_prior(rng, n)
    return spec.forward(X), X


def _norm_y(Y, normalizer):
    return Y if normalizer is None else normalizer.normalize_y(Y)


def nfp_error(spec, x, y_target, normalizer=None):
    """Mean over output dims of the squared NFP miss, in normalized units if a normalizer is given."""
    X, single = as_rows(x, spec.design_dim, "design")
    Yt, _ = as_rows(y_target, spec.performance_dim, "target")
    err = np.mean((_norm_y(spec.forward(X), normalizer) - _norm_y(Yt, normalizer)) ** 2, axis=1)
    return float(err[0]) if single else err


def surrogate_error(model, x, y_target, normalizer=None):
    """Like :func:`nfp_error` but re-predicting with ``model`` (Mlp or DeepEnsemble mean).

    With a normalizer, ``x`` and ``y_target`` are raw and are normalized first;
    otherwise both are taken to be in the model's own space.
    """
    from .ensemble import DeepEnsemble, predict
    from .nn import forward

    X, single = as_rows(x, model.input_dim, "design")
    Yt, _ = as_rows(y_target, model.output_dim, "target")
    if normalizer is not None:
        X = normalizer.normalize_x(X)
        Yt = normalizer.normalize_y(Yt)
    pred = predict(model, X).mu if isinstance(model, DeepEnsemble) else forward(model, X)
    err = np.mean((pred - Yt) ** 2, axis=1)
    return float(err[0]) if single else err


def identity_normalizer(spec):
    return Normalizer.identity(spec.design_dim, spec.performance_dim)
