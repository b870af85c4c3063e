"""Command-line entry point (``uainv``)."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .. import serialization as ser
from ..ensemble import EnsembleTrainConfig, UncertaintyWeights, predict, train_ensemble
from ..exceptions import DimensionError, DivergenceError, InversionError, SamplingError
from ..inversion import (
    BoundaryReg,
    FixedInit,
    GaussianInit,
    InversionConfig,
    SmoothnessReg,
    UniformInDataBox,
    na_ensemble_invert,
    na_invert,
    uana_invert,
)
from ..nfp import CorruptionSpec, Region, nfp_error, nfp_from_dict, nfp_to_dict, sample_dataset
from ..nn import TrainConfig, init_mlp, train_mse
from ..pareto import Nsga2Config, nsga2_run
from ..tandem import TandemTrainConfig, query, score_inverse_models, train_tandem, train_ua_tandem
from .config import ExperimentConfig, load_config
from .experiments import (
    ProfileAxis,
    ablation_summary,
    avoidance_study,
    ensemble_size_ablation,
    run_benchmark,
    run_sweep,
    uncertainty_profile,
)
from .report import write_benchmark, write_csv, write_json, write_table

log = logging.getLogger("uainv")

_EXPECTED = (DimensionError, DivergenceError, InversionError, SamplingError, ser.FormatError, ValueError, TypeError, OSError,
             KeyError)


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split()) if text else ()


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split()) if text else ()


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _EXPECTED as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc


@click.group(cls=_Group)
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose):
    """Neural inversion with uncertainty-aware surrogates."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _model_meta(sampled):
    lo, hi = _data(sampled).design_box()
    meta = {"design_box": [lo.tolist(), hi.tolist()]}
    if isinstance(sampled, ser.SampledDataset):
        meta["nfp"] = nfp_to_dict(sampled.spec)
        meta["data_seed"] = sampled.seed
    return meta


def _data(sampled):
    return sampled.data if isinstance(sampled, ser.SampledDataset) else sampled


# ------------------------------------------------------------------ data & training


@main.command("gen-data")
@click.option("--nfp", "nfp_kind", type=click.Choice(["robot_arm", "sine1d", "toy2d"]), default="robot_arm", show_default=True)
@click.option("--nfp-json", help="Full forward-process spec as JSON (overrides --nfp).")
@click.option("-n", "--n-samples", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--corruption", "corruption_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with noise_regions / sparse_regions.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def gen_data(nfp_kind, nfp_json, n_samples, seed, corruption_path, out):
    """Sample a dataset from an analytic forward process."""
    spec_d = json.loads(nfp_json) if nfp_json else {"kind": nfp_kind}
    if spec_d.get("kind", "robot_arm") == "robot_arm":
        spec_d.setdefault("angle_std", 0.5)
    spec = nfp_from_dict(spec_d)
    corruption = CorruptionSpec.from_dict(json.loads(Path(corruption_path).read_text())) if corruption_path else CorruptionSpec()
    sampled = sample_dataset(spec, n_samples, seed, corruption)
    ser.save_dataset(out, sampled)
    click.echo(f"wrote {n_samples} rows to {out}")


@main.command("train-surrogate")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hidden", default="128,128,128", show_default=True)
@click.option("--activation", default="relu", show_default=True)
@click.option("--epochs", type=int, default=150, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
@click.option("--batch-size", type=int, default=128, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def train_surrogate(data_path, hidden, activation, epochs, lr, batch_size, seed, out):
    """Train a single forward network under MSE."""
    sampled = ser.load_dataset(data_path)
    data = _data(sampled)
    init_seed, shuffle_seed = np.random.SeedSequence(seed).generate_state(2)
    net = init_mlp([data.design_dim, *_ints(hidden), data.performance_dim], activation, seed=int(init_seed))
    net, hist = train_mse(net, data, TrainConfig(lr, epochs, batch_size, int(shuffle_seed)))
    ser.save_mlp(out, net, data.normalizer, _model_meta(sampled))
    click.echo(f"final training MSE {hist[-1]:.3e}" if hist else "no epochs run")


@main.command("train-ensemble")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-M", "--members", type=int, default=10, show_default=True)
@click.option("--roster", help="Comma-separated hidden activations, one per member (default: diverse roster).")
@click.option("--mean-hidden", default="64,64", show_default=True)
@click.option("--var-hidden", default="32,32", show_default=True)
@click.option("--stage1-epochs", type=int, default=150, show_default=True)
@click.option("--stage2-epochs", type=int, default=60, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def train_ensemble_cmd(data_path, members, roster, mean_hidden, var_hidden, stage1_epochs, stage2_epochs, lr, seed, out):
    """Train a deep ensemble of mean/variance networks."""
    sampled = ser.load_dataset(data_path)
    data = _data(sampled)
    cfg = EnsembleTrainConfig(
        n_members=members,
        mean_hidden=_ints(mean_hidden),
        var_hidden=_ints(var_hidden),
        stage1=TrainConfig(lr, stage1_epochs),
        stage2=TrainConfig(lr, stage2_epochs),
        seed=seed,
    )
    roster_t = tuple(r.strip() for r in roster.split(",")) if roster else None
    ens = train_ensemble(data, cfg, roster=roster_t)
    ser.save_ensemble(out, ens, data.normalizer, _model_meta(sampled))
    click.echo(f"trained {ens.M} members: {', '.join(a.name for a in ens.roster)}")


# ------------------------------------------------------------------ inversion


def _load_targets(path, normalizer):
    Y = ser.load_rows(path)
    return Y, (Y if normalizer is None else normalizer.normalize_y(Y))


def _box(bundle, data_path):
    if data_path:
        return _data(ser.load_dataset(data_path)).design_box()
    if "design_box" in bundle.meta:
        lo, hi = bundle.meta["design_box"]
        return np.asarray(lo), np.asarray(hi)
    raise click.UsageError("model file has no stored design box; pass --data")


def _init(mode, lo, hi, normalizer):
    if mode == "uniform":
        return UniformInDataBox(lo, hi)
    if mode == "gaussian":
        return GaussianInit(np.zeros_like(lo), np.ones_like(lo))
    if mode.startswith("fixed:"):
        x = np.asarray(_floats(mode[6:]))
        return FixedInit(x if normalizer is None else normalizer.normalize_x(x))
    raise click.BadParameter(f"init must be uniform, gaussian or fixed:<x0,x1,...>; got {mode!r}")


def _nfp_of(bundle):
    return nfp_from_dict(bundle.meta["nfp"]) if "nfp" in bundle.meta else None


def _design_rows(ids, X, extra):
    """Plain dict rows: target id, raw design and extra per-row columns."""
    out = []
    for i, t in enumerate(ids):
        row = {"target_id": int(t)}
        row.update({k: float(v[i]) for k, v in extra.items()})
        row.update({f"x{j}": float(X[i, j]) for j in range(X.shape[1])})
        out.append(row)
    return out


def _write_dict_rows(out, rows):
    out = Path(out)
    header = list(rows[0]) if rows else []
    write_csv(out, header, [[repr(r[h]) if isinstance(r[h], float) else str(r[h]) for h in header] for r in rows])
    write_json(out.with_suffix(".json"), rows)


@main.command("invert")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["na", "uana", "na-ensemble"]), default="uana", show_default=True)
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Rows of raw target performances.")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=10.0, show_default=True)
@click.option("--delta", "step_size", type=float, default=0.01, show_default=True, help="Step size.")
@click.option("--iters", type=int, default=500, show_default=True)
@click.option("--restarts", type=int, default=10, show_default=True)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default="adam", show_default=True)
@click.option("--init", "init_mode", default="uniform", show_default=True, help="uniform | gaussian | fixed:x0,x1,...")
@click.option("--boundary", type=float, default=0.0, show_default=True, help="Boundary-loss weight (0 = off).")
@click.option("--smoothness", type=float, default=0.0, show_default=True, help="Smoothness weight (0 = off).")
@click.option("--skip", default="", help="Interior indices excluded from the smoothness term.")
@click.option("--select", type=click.Choice(["surrogate_error", "total_loss"]), default="surrogate_error", show_default=True)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), help="Dataset for the design box.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False), help="CSV report (JSON mirror alongside).")
def invert_cmd(model_path, method, targets_path, alpha, beta, step_size, iters, restarts, optimizer, init_mode,
               boundary, smoothness, skip, select, data_path, seed, out):
    """Gradient-based inversion of a trained surrogate or ensemble."""
    b = ser.load_model(model_path)
    if method == "na" and b.kind != "mlp":
        raise click.UsageError("--method na needs a single-network model")
    if method != "na" and b.kind != "ensemble":
        raise click.UsageError(f"--method {method} needs an ensemble model")
    nz = b.normalizer
    Y_raw, Yn = _load_targets(targets_path, nz)
    lo, hi = _box(b, data_path)
    regs = []
    if boundary > 0:
        regs.append(BoundaryReg.from_box(lo, hi, boundary))
    if smoothness > 0:
        regs.append(SmoothnessReg(_ints(skip), smoothness))
    cfg = InversionConfig(
        init=_init(init_mode, lo, hi, nz), step_size=step_size, max_iters=iters, restarts=restarts,
        optimizer=optimizer, uncertainty_weights=UncertaintyWeights(alpha, beta), regularizers=tuple(regs),
        seed=seed, select=select,
    )
    solver = {"na": na_invert, "uana": uana_invert, "na-ensemble": na_ensemble_invert}[method]
    outcomes = solver(b.model, Yn, cfg)
    Xn = np.stack([o.best.design for o in outcomes])
    X = Xn if nz is None else nz.denormalize_x(Xn)
    extra = {"surrogate_error": np.array([o.best.surrogate_error for o in outcomes]) / Yn.shape[1],
             "total_loss": np.array([o.best.total_loss for o in outcomes]),
             "restart": np.array([o.best.restart_index for o in outcomes])}
    if b.kind == "ensemble":
        p = predict(b.model, Xn)
        extra["sigma_aleatoric_sum"] = p.sigma_aleatoric.sum(1)
        extra["sigma_epistemic_sum"] = p.sigma_epistemic.sum(1)
    spec = _nfp_of(b)
    if spec is not None:
        extra["nfp_error"] = nfp_error(spec, X, Y_raw, nz)
    rows = _design_rows(range(len(X)), X, extra)
    for r in rows:
        r["restart"] = int(r["restart"])
    _write_dict_rows(out, rows)
    msg = f"inverted {len(rows)} targets with {method}"
    if spec is not None:
        msg += f"; median NFP error {np.median(extra['nfp_error']):.3e}"
    click.echo(msg)


# ------------------------------------------------------------------ tandem


@main.command("tandem-train")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Frozen forward model: a network (tandem) or an ensemble (UA-tandem).")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Dataset whose performances are the training targets.")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=10.0, show_default=True)
@click.option("--hidden", default="64,64", show_default=True)
@click.option("--activation", default="relu", show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--candidates", type=int, default=5, show_default=True)
@click.option("--validation-fraction", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def tandem_train(model_path, data_path, alpha, beta, hidden, activation, epochs, lr, candidates, validation_fraction, seed, out):
    """Train candidate inverse nets and keep the best on validation NFP error."""
    b = ser.load_model(model_path)
    if b.kind not in ("mlp", "ensemble"):
        raise click.UsageError("--model must be a network or an ensemble")
    sampled = ser.load_dataset(data_path)
    if not isinstance(sampled, ser.SampledDataset):
        raise click.UsageError("dataset has no forward-process spec; validation needs the NFP")
    data = sampled.data
    nz = b.normalizer or data.normalizer
    Y = data.performances
    nv = max(1, int(np.floor(validation_fraction * len(Y))))
    Y_train, Y_val = Y[:-nv], Y[-nv:]
    cfg = TandemTrainConfig(train=TrainConfig(lr, epochs), hidden=_ints(hidden), activation=activation,
                            uncertainty_weights=UncertaintyWeights(alpha, beta), candidate_count=candidates,
                            validation_fraction=validation_fraction)
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(candidates)]
    trainer = train_ua_tandem if b.kind == "ensemble" else train_tandem
    nets = [trainer(b.model, nz.normalize_y(Y_train), cfg, seed=s)[0] for s in seeds]
    scores = score_inverse_models(nets, sampled.spec, Y_val, nz)
    k = int(np.argmin(scores))
    meta = dict(b.meta, tandem_kind="ua-tandem" if b.kind == "ensemble" else "tandem", validation_scores=scores,
                selected=k, seed=seeds[k])
    ser.save_inverse(out, nets[k], nz, meta)
    click.echo(f"selected candidate {k} (validation NFP error {scores[k]:.3e})")


@main.command("tandem-query")
@click.option("--inverse", "inverse_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def tandem_query(inverse_path, targets_path, out):
    """Designs proposed by a trained inverse net (one forward pass)."""
    b = ser.load_model(inverse_path)
    if b.kind != "inverse":
        raise click.UsageError("expected an inverse-net file")
    nz = b.normalizer
    Y_raw, Yn = _load_targets(targets_path, nz)
    Xn = query(b.model, Yn)
    X = Xn if nz is None else nz.denormalize_x(Xn)
    extra = {}
    spec = _nfp_of(b)
    if spec is not None:
        extra["nfp_error"] = nfp_error(spec, X, Y_raw, nz)
    _write_dict_rows(out, _design_rows(range(len(X)), X, extra))
    click.echo(f"wrote {len(X)} designs to {out}")


# ------------------------------------------------------------------ experiments


def _cfg(config_path, seed):
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    return cfg if seed is None else replace(cfg, seed=seed)


def _out_dir(cfg, out_dir):
    return Path(out_dir or cfg.output.get("dir", "results"))


@main.command("bench")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, help="Override the master seed.")
@click.option("--out-dir", type=click.Path(file_okay=False))
def bench(config_path, seed, out_dir):
    """Run every configured method and write bench/summary CSV + JSON."""
    cfg = _cfg(config_path, seed)
    out = _out_dir(cfg, out_dir)
    report = run_benchmark(cfg, on_progress=lambda m, k, rows: log.info("%s repeat %d: %d rows", m, k, len(rows)))
    write_benchmark(out, report, cfg.to_dict())
    for s in report.summary:
        click.echo(f"{s.method:12s} nfp {s.nfp_mean:.3e} +- {s.nfp_std:.3e}  surrogate {s.surrogate_mean:.3e} +- "
                   f"{s.surrogate_std:.3e}  median nfp {s.nfp_median:.3e}")
    for f in report.failures:
        click.echo(f"FAILED {f.method} repeat {f.repeat}: {f.message}", err=True)
    if report.failures:
        sys.exit(2)


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["uana", "ua-tandem"]), default="uana", show_default=True)
@click.option("--repeat", type=int, default=0, show_default=True)
@click.option("--seed", type=int)
@click.option("-o", "--out", type=click.Path(dir_okay=False), help="JSON sweep log.")
def sweep(config_path, method, repeat, seed, out):
    """Tune (alpha, beta) on the validation targets: coarse grid plus refinement steps."""
    cfg = _cfg(config_path, seed)
    best, entries = run_sweep(cfg, method, repeat)
    for e in entries:
        click.echo(f"{e.phase:8s} alpha={e.alpha:.4g} beta={e.beta:.4g} score={e.score:.4e}")
    click.echo(f"best alpha={best[0]:.6g} beta={best[1]:.6g}")
    if out:
        write_json(out, {"best": list(best), "log": [e.__dict__ for e in entries]})


def _parse_region(specs):
    """``dim:lo:hi`` items (empty bound = open) into a Region."""
    items = []
    for s in specs:
        parts = s.split(":")
        if len(parts) != 3:
            raise click.BadParameter(f"region item {s!r} is not dim:lo:hi")
        d, lo, hi = parts
        items.append((int(d), (float(lo) if lo else None, float(hi) if hi else None)))
    return Region(tuple(items))


@main.command("avoidance")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--region", "region_items", multiple=True, required=True, help="dim:lo:hi, repeatable (conjunction).")
@click.option("--threshold", default="inf", show_default=True,
              help="Per-dim count threshold (one value or comma list; inf skips a dim).")
@click.option("--variants", default="standard,sparse,noisy", show_default=True)
@click.option("--noise-std", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int)
@click.option("--out-dir", type=click.Path(file_okay=False))
def avoidance(config_path, region_items, threshold, variants, noise_std, seed, out_dir):
    """Count best designs landing in a sparse/noisy region, per method and dataset variant."""
    cfg = _cfg(config_path, seed)
    region = _parse_region(region_items)
    thr = _floats(threshold)
    thr = thr[0] if len(thr) == 1 else np.asarray(thr)
    reports, benches = avoidance_study(cfg, region, thr, tuple(v.strip() for v in variants.split(",")), noise_std)
    out = _out_dir(cfg, out_dir)
    write_table(out / "avoidance", reports)
    for variant, rep in benches.items():
        write_benchmark(out / variant, rep, cfg.to_dict())
    for r in reports:
        click.echo(f"{r.variant:8s} {r.method:12s} repeat {r.repeat}: {r.region_count}/{r.n_targets} in region, "
                   f"dim counts {list(r.dim_counts)}")


@main.command("profile")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dim", type=int, required=True)
@click.option("--start", type=float, required=True)
@click.option("--stop", type=float, required=True)
@click.option("--num", type=int, default=101, show_default=True)
@click.option("--base", help="Comma list for the fixed coordinates (default: data mean).")
@click.option("--normalized", is_flag=True, help="Axis and variances in normalized units.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def profile(model_path, dim, start, stop, num, base, normalized, out):
    """Aleatoric/epistemic variance along one design axis (plot-ready table)."""
    b = ser.load_model(model_path)
    if b.kind != "ensemble":
        raise click.UsageError("profile needs an ensemble model")
    axis = ProfileAxis(dim, start, stop, num, _floats(base) or None)
    rows = uncertainty_profile(b.model, axis, None if normalized else b.normalizer)
    write_table(Path(out).with_suffix(""), rows)
    click.echo(f"wrote {len(rows)} profile points")


@main.command("ablate-ensemble")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--sizes", default="2,5,10", show_default=True)
@click.option("--seed", type=int)
@click.option("--out-dir", type=click.Path(file_okay=False))
def ablate_ensemble(config_path, sizes, seed, out_dir):
    """UANA NFP error versus ensemble size (prefixes of one trained ensemble)."""
    cfg = _cfg(config_path, seed)
    rows = ensemble_size_ablation(cfg, _ints(sizes))
    write_table(_out_dir(cfg, out_dir) / "ablation", rows)
    for m, v in sorted(ablation_summary(rows).items()):
        click.echo(f"M={m:3d} median NFP error {v:.3e}")


@main.command("pareto")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", help="Raw target performance as a comma list.")
@click.option("--targets", "targets_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=10.0, show_default=True)
@click.option("--population", type=int, default=1000, show_default=True)
@click.option("--generations", type=int, default=100, show_default=True)
@click.option("--expand", type=float, default=0.1, show_default=True, help="Box expansion around the data box.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
def pareto(model_path, target, targets_path, alpha, beta, population, generations, expand, seed, out):
    """NSGA-II front of (surrogate mismatch, weighted uncertainty) per target."""
    b = ser.load_model(model_path)
    if b.kind != "ensemble":
        raise click.UsageError("pareto needs an ensemble model")
    if bool(target) == bool(targets_path):
        raise click.UsageError("give exactly one of --target / --targets")
    Y_raw = np.atleast_2d(_floats(target)) if target else ser.load_rows(targets_path)
    nz = b.normalizer
    Yn = Y_raw if nz is None else nz.normalize_y(Y_raw)
    lo, hi = _box(b, None)
    cfg = Nsga2Config.from_data_box(lo, hi, expand, population=population, generations=generations, seed=seed)
    rows = []
    for t, y in enumerate(Yn):
        for ind in nsga2_run(b.model, y, UncertaintyWeights(alpha, beta), cfg):
            x = ind.design if nz is None else nz.denormalize_x(ind.design)
            row = {"target_id": t, "mse": ind.mse, "uncertainty_score": ind.uncertainty_score}
            row.update({f"x{j}": float(v) for j, v in enumerate(x)})
            rows.append(row)
    _write_dict_rows(out, rows)
    click.echo(f"wrote {len(rows)} front points for {len(Yn)} targets")


if __name__ == "__main__":  # pragma: no cover
    main()
