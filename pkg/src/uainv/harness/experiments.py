"""Experiment drivers: benchmark, weight sweep, avoidance, profiles, ensemble-size ablation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..ensemble import UncertaintyWeights, predict, train_ensemble
from ..inversion import (
    BoundaryReg,
    FixedInit,
    GaussianInit,
    InversionConfig,
    UniformInDataBox,
    best_designs,
    na_ensemble_invert,
    na_invert,
    uana_invert,
)
from ..nfp import CorruptionSpec, Region, nfp_error, sample_dataset, sample_targets
from ..nn import forward, init_mlp, train_mse
from ..optim import OptimizerSpec
from ..tandem import TandemTrainConfig, query, train_tandem, train_ua_tandem
from .config import ExperimentConfig, SweepGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReportRow:
    method: str
    repeat: int
    target_id: int
    design: tuple
    surrogate_error: float
    nfp_error: float
    sigma_aleatoric_sum: float
    sigma_epistemic_sum: float
    seed: int
    alpha: float
    beta: float
    wall_time: float = 0.0

    def __post_init__(self):
        if not (self.surrogate_error >= 0 and self.nfp_error >= 0):
            raise ValueError("errors must be >= 0")


@dataclass(frozen=True)
class SummaryRow:
    method: str
    nfp_mean: float
    nfp_std: float
    surrogate_mean: float
    surrogate_std: float
    nfp_median: float
    n_rows: int
    n_repeats: int


@dataclass(frozen=True)
class SweepEntry:
    alpha: float
    beta: float
    score: float
    phase: str


@dataclass(frozen=True)
class MethodFailure:
    method: str
    repeat: int
    message: str


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    sweeps: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def method_rows(self, method):
        return [r for r in self.rows if r.method == method]

    def median_nfp(self, method):
        return float(np.median([r.nfp_error for r in self.method_rows(method)]))


def _seeds(master, *path, n=1):
    states = np.random.SeedSequence([int(master), *map(int, path)]).generate_state(n, dtype=np.uint32)
    return [int(s) for s in states]


# ---------------------------------------------------------------- weight sweep


def _scale(w):
    return w[0] + w[1]


def _same(a, b):
    return all(math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-300) for x, y in zip(a, b))


def _next_candidate(log):
    """Pick the next refinement point from the evaluations so far."""
    order = sorted(range(len(log)), key=lambda i: (log[i].score, i))
    best = (log[order[0]].alpha, log[order[0]].beta)
    second = next(((log[i].alpha, log[i].beta) for i in order[1:] if not _same((log[i].alpha, log[i].beta), best)), None)
    d = 1.0 if second is None or _scale(second) > _scale(best) else -1.0
    seen = [(e.alpha, e.beta) for e in log]
    factor = math.sqrt(10.0)
    for _ in range(30):
        for sign in (d, -d):
            cand = (best[0] * factor**sign, best[1] * factor**sign)
            if not any(_same(cand, s) for s in seen):
                return cand
        # both sides already tried: bracketed, so halve the log step
        factor = math.sqrt(factor)
    return (best[0] * factor**d, best[1] * factor**d)


def sweep_hyperparams(grid, evaluate):
    """Tune ``(alpha, beta)`` with ``len(grid.coarse) + grid.refine_steps`` evaluations.

    ``evaluate(alpha, beta)`` returns a validation score (lower is better);
    exceptions and non-finite scores count as failures. The coarse pairs are
    evaluated in order, then each refinement step scales the current best pair
    by sqrt(10), first toward the runner-up, then away from it; if both are
    already evaluated the step factor is square-rooted. Ties go to the pair
    evaluated first. Returns ``((alpha, beta), log)``.
    """
    grid = grid if isinstance(grid, SweepGrid) else SweepGrid(**grid)
    log = []

    def run(w, phase):
        try:
            score = float(evaluate(*w))
        except Exception as exc:  # noqa: BLE001 - a failed run is a data point
            logger.warning("sweep run %s failed: %s", w, exc)
            score = math.inf
        if not math.isfinite(score):
            score = math.inf
        log.append(SweepEntry(float(w[0]), float(w[1]), score, phase))

    for w in grid.coarse:
        run(w, "coarse")
    for step in range(grid.refine_steps):
        if all(math.isinf(e.score) for e in log):
            break
        run(_next_candidate(log), f"refine{step + 1}")
    while len(log) < grid.budget:  # keep the budget exact even when everything failed
        run(grid.coarse[0], "retry")
    scores = [e.score for e in log]
    if all(math.isinf(s) for s in scores):
        raise RuntimeError("every sweep run failed")
    i = int(np.argmin(scores))
    return (log[i].alpha, log[i].beta), log


# ---------------------------------------------------------------- per-repeat context


@dataclass
class RepeatContext:
    cfg: ExperimentConfig
    repeat: int
    sampled: object
    Y_val: np.ndarray
    Y_test: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seeds: dict
    _na_net: object = None
    _ens: object = None

    @property
    def data(self):
        return self.sampled.data

    @property
    def normalizer(self):
        return self.sampled.data.normalizer

    @property
    def spec(self):
        return self.cfg.nfp

    @property
    def na_net(self):
        if self._na_net is None:
            s = self.cfg.surrogate
            net = init_mlp([self.data.design_dim, *s.hidden, self.data.performance_dim], s.activation, seed=self.seeds["surrogate_init"])
            self._na_net, _ = train_mse(net, self.data, replace(s.train, seed=self.seeds["surrogate_shuffle"]))
        return self._na_net

    @property
    def ensemble(self):
        if self._ens is None:
            ecfg = replace(self.cfg.ensemble, seed=self.seeds["ensemble"])
            self._ens = train_ensemble(self.data, ecfg, roster=self.cfg.roster)
        return self._ens


def make_context(cfg, repeat, na_net=None, ensemble=None):
    names = ("data", "targets", "surrogate_init", "surrogate_shuffle", "ensemble", "method")
    seeds = dict(zip(names, _seeds(cfg.seed, repeat, n=len(names))))
    sampled = sample_dataset(cfg.nfp, cfg.n_samples, seeds["data"], cfg.corruption)
    Y, _ = sample_targets(cfg.nfp, cfg.target_count, seeds["targets"])
    nv = cfg.validation_count
    ids = np.arange(cfg.target_count)
    return RepeatContext(cfg, repeat, sampled, Y[:nv], Y[nv:], ids[:nv], ids[nv:], seeds, na_net, ensemble)


def inversion_config(ctx, seed, weights=(0.0, 0.0)):
    spec = ctx.cfg.inversion
    lo, hi = ctx.data.design_box()
    nz = ctx.normalizer
    if spec.init == "uniform":
        init = UniformInDataBox(lo, hi)
    elif spec.init == "gaussian":
        init = GaussianInit(np.zeros_like(lo), np.ones_like(lo))
    else:
        init = FixedInit(nz.normalize_x(np.asarray(spec.init)))
    regs = (BoundaryReg.from_box(lo, hi, spec.boundary_weight),) if spec.boundary_weight > 0 else ()
    return InversionConfig(
        init=init,
        step_size=spec.step_size,
        max_iters=spec.max_iters,
        restarts=spec.restarts,
        optimizer=OptimizerSpec(spec.optimizer),
        uncertainty_weights=UncertaintyWeights(*weights),
        regularizers=regs,
        seed=seed,
        select=spec.select,
    )


def tandem_config(ctx, weights=(0.0, 0.0)):
    t = ctx.cfg.tandem
    return TandemTrainConfig(train=t.train, hidden=t.hidden, activation=t.activation, uncertainty_weights=UncertaintyWeights(*weights))


def _mean_val_error(ctx, Xn, Y_raw):
    return float(np.mean(nfp_error(ctx.spec, ctx.normalizer.denormalize_x(Xn), Y_raw, ctx.normalizer)))


class _Method:
    """One inversion method bound to a repeat context.

    ``propose(param, Y_raw, ids)`` returns normalized designs; ``param`` is a
    seed for seed-selected methods and a weight pair for tuned ones.
    """

    tuned = False

    def __init__(self, ctx):
        self.ctx = ctx

    def model(self):
        return self.ctx.na_net

    def propose(self, param, Y_raw, ids):
        raise NotImplementedError


class _NA(_Method):
    def propose(self, seed, Y_raw, ids):
        Yn = self.ctx.normalizer.normalize_y(Y_raw)
        return best_designs(na_invert(self.ctx.na_net, Yn, inversion_config(self.ctx, seed), target_ids=ids))


class _NAEnsemble(_Method):
    def model(self):
        return self.ctx.ensemble

    def propose(self, seed, Y_raw, ids):
        Yn = self.ctx.normalizer.normalize_y(Y_raw)
        return best_designs(na_ensemble_invert(self.ctx.ensemble, Yn, inversion_config(self.ctx, seed), target_ids=ids))


class _UANA(_NAEnsemble):
    tuned = True

    def propose(self, weights, Y_raw, ids):
        ctx = self.ctx
        Yn = ctx.normalizer.normalize_y(Y_raw)
        cfg = inversion_config(ctx, ctx.seeds["method"], weights)
        return best_designs(uana_invert(ctx.ensemble, Yn, cfg, target_ids=ids))


class _Tandem(_Method):
    def __init__(self, ctx):
        super().__init__(ctx)
        self._nets = {}

    def _train(self, key):
        return train_tandem(self.ctx.na_net, self.ctx.data.Yn, tandem_config(self.ctx), seed=key)[0]

    def propose(self, key, Y_raw, ids):
        if key not in self._nets:
            self._nets[key] = self._train(key)
        return query(self._nets[key], self.ctx.normalizer.normalize_y(Y_raw))


class _UATandem(_Tandem):
    tuned = True

    def model(self):
        return self.ctx.ensemble

    def _train(self, key):
        ctx = self.ctx
        return train_ua_tandem(ctx.ensemble, ctx.data.Yn, tandem_config(ctx, key), seed=ctx.seeds["method"])[0]


_METHOD_TYPES = {"na": _NA, "na-ensemble": _NAEnsemble, "uana": _UANA, "tandem": _Tandem, "ua-tandem": _UATandem}


def _select(ctx, method, report_key=None, sweeps=None):
    """Validation-driven choice of a seed (untuned methods) or weight pair (tuned ones)."""
    cfg = ctx.cfg
    if method.tuned:
        if cfg.weights is not None:
            return tuple(cfg.weights), None
        if len(ctx.Y_val) == 0:
            return tuple(cfg.sweep.coarse[0]), None

        def evaluate(alpha, beta):
            return _mean_val_error(ctx, method.propose((alpha, beta), ctx.Y_val, ctx.val_ids), ctx.Y_val)

        best, log = sweep_hyperparams(cfg.sweep, evaluate)
        return best, log
    seeds = _seeds(ctx.seeds["method"], 1, n=cfg.method_seeds)
    if len(ctx.Y_val) == 0 or len(seeds) == 1:
        return seeds[0], None
    scores = []
    for s in seeds:
        try:
            scores.append(_mean_val_error(ctx, method.propose(s, ctx.Y_val, ctx.val_ids), ctx.Y_val))
        except Exception as exc:  # noqa: BLE001
            logger.warning("seed %d failed: %s", s, exc)
            scores.append(math.inf)
    if all(math.isinf(s) for s in scores):
        raise RuntimeError("all method seeds failed on the validation targets")
    log = [SweepEntry(float(s), float("nan"), sc, "seed") for s, sc in zip(seeds, scores)]
    return seeds[int(np.argmin(scores))], log


def evaluate_designs(ctx, name, Xn, Y_raw, ids, model, seed, weights, wall_time=0.0):
    """ReportRows for normalized designs ``Xn`` proposed for raw targets ``Y_raw``."""
    nz = ctx.normalizer
    X = nz.denormalize_x(Xn)
    nfp = nfp_error(ctx.spec, X, Y_raw, nz)
    if hasattr(model, "members"):
        p = predict(model, Xn)
        pred = p.mu
        sa, se = p.sigma_aleatoric.sum(1), p.sigma_epistemic.sum(1)
    else:
        pred = forward(model, Xn)
        sa = se = np.full(len(Xn), np.nan)
    sur = np.mean((pred - nz.normalize_y(Y_raw)) ** 2, axis=1)
    per = wall_time / max(len(Xn), 1)
    return [
        ReportRow(name, ctx.repeat, int(t), tuple(float(v) for v in X[i]), float(sur[i]), float(nfp[i]),
                  float(sa[i]), float(se[i]), int(seed), float(weights[0]), float(weights[1]), per)
        for i, t in enumerate(ids)
    ]


def run_method(ctx, name):
    """Select, then run ``name`` on the test targets. Returns ``(rows, selection, log, seconds)``."""
    t0 = time.perf_counter()
    method = _METHOD_TYPES[name](ctx)
    choice, log = _select(ctx, method)
    Xn = method.propose(choice, ctx.Y_test, ctx.test_ids)
    elapsed = time.perf_counter() - t0
    seed, weights = (ctx.seeds["method"], choice) if method.tuned else (choice, (0.0, 0.0))
    rows = evaluate_designs(ctx, name, Xn, ctx.Y_test, ctx.test_ids, method.model(), seed, weights, elapsed)
    return rows, choice, log, elapsed


def summarize(rows, methods, repeat_count):
    out = []
    for m in methods:
        mine = [r for r in rows if r.method == m]
        if not mine:
            continue
        reps = sorted({r.repeat for r in mine})
        nfp_means = [np.mean([r.nfp_error for r in mine if r.repeat == k]) for k in reps]
        sur_means = [np.mean([r.surrogate_error for r in mine if r.repeat == k]) for k in reps]
        ddof = 1 if len(reps) > 1 else 0
        out.append(
            SummaryRow(
                m,
                float(np.mean(nfp_means)),
                float(np.std(nfp_means, ddof=ddof)),
                float(np.mean(sur_means)),
                float(np.std(sur_means, ddof=ddof)),
                float(np.median([r.nfp_error for r in mine])),
                len(mine),
                len(reps),
            )
        )
    return out


def run_benchmark(cfg, contexts=None, on_progress=None):
    """Every configured method on every repeat; failures are recorded, not raised.

    ``contexts`` may supply prebuilt :class:`RepeatContext` objects (one per
    repeat) so trained surrogates can be shared between studies.
    """
    report = BenchmarkReport()
    for k in range(cfg.repeat_count):
        ctx = contexts[k] if contexts is not None else make_context(cfg, k)
        for name in cfg.methods:
            try:
                rows, choice, log, elapsed = run_method(ctx, name)
            except Exception as exc:  # noqa: BLE001 - recorded per method
                logger.exception("method %s failed on repeat %d", name, k)
                report.failures.append(MethodFailure(name, k, f"{type(exc).__name__}: {exc}"))
                continue
            report.rows.extend(rows)
            report.selections[(name, k)] = choice
            if log is not None:
                report.sweeps[(name, k)] = log
            report.timings[(name, k)] = elapsed
            if on_progress:
                on_progress(name, k, rows)
    report.summary = summarize(report.rows, cfg.methods, cfg.repeat_count)
    return report


def run_sweep(cfg, method="uana", repeat=0, context=None):
    """The weight sweep alone for ``method`` on one repeat's validation targets."""
    ctx = context or make_context(cfg, repeat)
    m = _METHOD_TYPES[method](ctx)
    if not m.tuned:
        raise ValueError(f"{method} has no uncertainty weights to sweep")
    if len(ctx.Y_val) == 0:
        raise ValueError("no validation targets; raise target_count")
    ctx = replace(ctx, cfg=replace(ctx.cfg, weights=None))
    return _select(ctx, _METHOD_TYPES[method](ctx))


# ---------------------------------------------------------------- avoidance


@dataclass(frozen=True)
class AvoidanceReport:
    method: str
    variant: str
    repeat: int
    region_count: int
    dim_counts: tuple
    n_targets: int

    def __post_init__(self):
        if self.region_count > self.n_targets or any(c > self.n_targets for c in self.dim_counts):
            raise ValueError("counts cannot exceed the number of targets")


VARIANTS = ("standard", "sparse", "noisy")


def variant_config(cfg, region, variant, noise_std=0.1):
    region = region if isinstance(region, Region) else Region(region)
    if variant == "standard":
        corruption = CorruptionSpec()
    elif variant == "sparse":
        corruption = CorruptionSpec(sparse_regions=(region,))
    elif variant == "noisy":
        corruption = CorruptionSpec(noise_regions=((region, noise_std),))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return replace(cfg, corruption=corruption)


def count_avoidance(X, region, threshold):
    """``(designs inside region, per-dim counts of x[d] > threshold[d])`` for raw designs."""
    X = np.atleast_2d(X)
    thr = np.broadcast_to(np.asarray(threshold, dtype=np.float64), (X.shape[1],))
    dims = tuple(int(np.sum(X[:, d] > thr[d])) if np.isfinite(thr[d]) else 0 for d in range(X.shape[1]))
    return int(np.sum(region.contains(X))), dims


def avoidance_study(cfg, region, threshold, variants=VARIANTS, noise_std=0.1, report=None):
    """Count best designs that land in ``region`` for each dataset variant and method.

    ``threshold`` (scalar or per-dim, ``inf`` to skip a dim) drives the
    per-dimension counts. Returns ``(list of AvoidanceReport, {variant: BenchmarkReport})``.
    """
    region = region if isinstance(region, Region) else Region(region)
    out, benches = [], {}
    for variant in variants:
        vcfg = variant_config(cfg, region, variant, noise_std)
        bench = run_benchmark(vcfg)
        benches[variant] = bench
        for name in vcfg.methods:
            for k in range(vcfg.repeat_count):
                rows = [r for r in bench.rows if r.method == name and r.repeat == k]
                if not rows:
                    continue
                X = np.array([r.design for r in rows])
                inside, dims = count_avoidance(X, region, threshold)
                out.append(AvoidanceReport(name, variant, k, inside, dims, len(rows)))
    return out, benches


# ---------------------------------------------------------------- uncertainty profile


@dataclass(frozen=True)
class ProfileAxis:
    dim: int
    start: float
    stop: float
    num: int = 101
    base: tuple | None = None

    def __post_init__(self):
        if self.num < 2:
            raise ValueError("a profile needs at least 2 points")
        if not self.start < self.stop:
            raise ValueError("profile start must be below stop")


@dataclass(frozen=True)
class ProfileRow:
    x: float
    sigma_aleatoric: float
    sigma_epistemic: float


def uncertainty_profile(ens, axis, normalizer=None):
    """Aleatoric and epistemic variance (summed over outputs) along one design axis.

    With a normalizer the axis and base point are in raw design units and the
    variances are reported in raw performance units squared.
    """
    d = ens.input_dim
    if not 0 <= axis.dim < d:
        raise ValueError(f"profile dim {axis.dim} outside [0, {d})")
    xs = np.linspace(axis.start, axis.stop, axis.num)
    if axis.base is None:
        base = np.zeros(d) if normalizer is None else normalizer.x_mean.copy()
    else:
        base = np.asarray(axis.base, dtype=np.float64)
    X = np.tile(base, (axis.num, 1))
    X[:, axis.dim] = xs
    Xn = X if normalizer is None else normalizer.normalize_x(X)
    p = predict(ens, Xn)
    scale = 1.0 if normalizer is None else normalizer.y_std**2
    sa = (p.sigma_aleatoric * scale).sum(1)
    se = (p.sigma_epistemic * scale).sum(1)
    return [ProfileRow(float(x), float(a), float(e)) for x, a, e in zip(xs, sa, se)]


# ---------------------------------------------------------------- ensemble-size ablation


@dataclass(frozen=True)
class AblationRow:
    n_members: int
    repeat: int
    nfp_median: float
    nfp_mean: float
    alpha: float
    beta: float


def ensemble_size_ablation(cfg, sizes, contexts=None):
    """UANA NFP error per ensemble size.

    One ensemble of ``max(sizes)`` members is trained per repeat and each
    size uses its leading members, so smaller ensembles are exact prefixes of
    larger ones. Weights are swept per size unless ``cfg.weights`` is set.
    """
    sizes = [int(m) for m in sizes]
    if not sizes or min(sizes) < 2:
        raise ValueError("ensemble sizes must be >= 2")
    big = replace(cfg, ensemble=replace(cfg.ensemble, n_members=max(sizes)))
    rows = []
    for k in range(cfg.repeat_count):
        ctx = contexts[k] if contexts is not None else make_context(big, k)
        full = ctx.ensemble
        for M in sizes:
            sub = make_context(big, k, na_net=ctx._na_net, ensemble=full.subset(M))
            method = _UANA(sub)
            (alpha, beta), _ = _select(sub, method)
            Xn = method.propose((alpha, beta), sub.Y_test, sub.test_ids)
            err = nfp_error(sub.spec, sub.normalizer.denormalize_x(Xn), sub.Y_test, sub.normalizer)
            rows.append(AblationRow(M, k, float(np.median(err)), float(np.mean(err)), alpha, beta))
    return rows


def ablation_summary(rows):
    """``{M: median over repeats of the per-repeat median NFP error}``."""
    by = {}
    for r in rows:
        by.setdefault(r.n_members, []).append(r.nfp_median)
    return {m: float(np.median(v)) for m, v in by.items()}


__all__ = [
    "AblationRow",
    "AvoidanceReport",
    "BenchmarkReport",
    "MethodFailure",
    "ProfileAxis",
    "ProfileRow",
    "RepeatContext",
    "ReportRow",
    "SummaryRow",
    "SweepEntry",
    "VARIANTS",
    "ablation_summary",
    "avoidance_study",
    "count_avoidance",
    "ensemble_size_ablation",
    "evaluate_designs",
    "inversion_config",
    "make_context",
    "run_benchmark",
    "run_method",
    "run_sweep",
    "summarize",
    "sweep_hyperparams",
    "uncertainty_profile",
    "variant_config",
]
