import json
import math

import numpy as np
import pytest

from conftest import tiny_config_dict
from uainv.harness import (
    ExperimentConfig,
    ProfileAxis,
    SweepGrid,
    ablation_summary,
    count_avoidance,
    ensemble_size_ablation,
    load_config,
    make_context,
    run_benchmark,
    run_sweep,
    sweep_hyperparams,
    uncertainty_profile,
    variant_config,
    write_benchmark,
)
from uainv.harness.experiments import AvoidanceReport, ReportRow, summarize
from uainv.harness.report import read_report_csv
from uainv.nfp import Region, nfp_error


@pytest.fixture(scope="module")
def tiny():
    return ExperimentConfig.from_dict(tiny_config_dict())


@pytest.fixture(scope="module")
def tiny_report(tiny):
    return run_benchmark(tiny)


def test_config_defaults_and_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.nfp.angle_std == 0.5 and cfg.sweep.budget == 5
    assert cfg.validation_count == 11 and cfg.test_count == 101
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p).to_dict() == cfg.to_dict()


def test_config_rejects_unknown_keys_and_methods():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("na", "magic"))
    with pytest.raises(ValueError):
        ExperimentConfig(weights=(-1, 0))


@pytest.mark.parametrize("T,nv", [(1, 0), (2, 1), (9, 1), (10, 1), (25, 2), (112, 11)])
def test_validation_split_small_target_sets(T, nv):
    assert ExperimentConfig(target_count=T).validation_count == nv


def test_sweep_budget_exact_and_flat_tiebreak():
    calls = []
    best, log = sweep_hyperparams(SweepGrid(), lambda a, b: calls.append((a, b)) or 1.0)
    assert len(calls) == len(log) == 5
    assert best == (0.1, 1.0)
    assert len({c for c in calls}) == 5


def test_sweep_refines_around_planted_minimum():
    def score(a, b):
        return (math.log10(a) - 0.0) ** 2 + (math.log10(b) - 1.0) ** 2

    best, log = sweep_hyperparams(SweepGrid(), score)
    assert len(log) == 5
    assert best == (1.0, 10.0)
    refine = [(e.alpha, e.beta) for e in log if e.phase.startswith("refine")]
    for a, b in refine:
        assert 10**-0.51 <= a <= 10**0.51 and 10**0.49 <= b <= 10**1.51


def test_sweep_moves_off_grid_when_optimum_between():
    best, log = sweep_hyperparams(SweepGrid(), lambda a, b: abs(math.log10(a) - 0.5))
    assert best[0] == pytest.approx(10**0.5)


def test_sweep_survives_failures():
    def bad(a, b):
        if a > 0.5:
            raise RuntimeError("boom")
        return a

    best, log = sweep_hyperparams(SweepGrid(), bad)
    assert len(log) == 5 and best[0] <= 0.1
    with pytest.raises(RuntimeError):
        sweep_hyperparams(SweepGrid(), lambda a, b: math.nan)


def test_context_seeds_and_split(tiny):
    a, b = make_context(tiny, 0), make_context(tiny, 0)
    assert np.array_equal(a.data.designs, b.data.designs)
    assert make_context(tiny, 1).seeds != a.seeds
    assert len(a.Y_val) == 1 and len(a.Y_test) == 11
    assert list(a.test_ids) == list(range(1, 12))


def test_benchmark_report_contents(tiny, tiny_report):
    rep = tiny_report
    assert not rep.failures
    assert {s.method for s in rep.summary} == set(tiny.methods)
    for s in rep.summary:
        assert s.n_repeats == 2 and s.n_rows == 22
    # ensemble-based rows carry uncertainty sums, single-net rows do not
    assert all(not math.isnan(r.sigma_epistemic_sum) for r in rep.method_rows("uana"))
    assert all(math.isnan(r.sigma_epistemic_sum) for r in rep.method_rows("na"))
    assert set(rep.sweeps) >= {("uana", 0), ("ua-tandem", 1)}


def test_nfp_error_recomputable_from_design(tiny, tiny_report):
    ctxs = {k: make_context(tiny, k) for k in range(2)}
    for r in tiny_report.rows:
        ctx = ctxs[r.repeat]
        t = list(ctx.test_ids).index(r.target_id)
        again = nfp_error(tiny.nfp, np.array(r.design), ctx.Y_test[t], ctx.normalizer)
        assert abs(again - r.nfp_error) <= 1e-12


def test_single_repeat_std_is_zero(tiny):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(repeat_count=1, methods=["na", "tandem"]))
    rep = run_benchmark(cfg)
    assert all(s.nfp_std == 0.0 and s.surrogate_std == 0.0 for s in rep.summary)


def test_report_files_deterministic(tmp_path, tiny, tiny_report):
    write_benchmark(tmp_path / "a", tiny_report, tiny.to_dict())
    write_benchmark(tmp_path / "b", run_benchmark(tiny), tiny.to_dict())
    for name in ("bench.csv", "bench.json", "summary.csv", "sweeps.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_report_csv(tmp_path / "a" / "bench.csv")
    assert rows[0]["nfp_error"] == tiny_report.rows[0].nfp_error


def test_failures_are_recorded_not_raised(tiny):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(repeat_count=1, methods=["na"], weights=None))
    ctx = make_context(cfg, 0)
    object.__setattr__(ctx, "_na_net", "not a network")
    rep = run_benchmark(cfg, contexts=[ctx])
    assert len(rep.failures) == 1 and rep.failures[0].method == "na"


def test_fixed_weights_skip_sweep(tiny):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(repeat_count=1, methods=["uana"], weights=[0.5, 5]))
    rep = run_benchmark(cfg)
    assert not rep.sweeps and rep.selections[("uana", 0)] == (0.5, 5.0)


def test_run_sweep_budget(tiny):
    best, log = run_sweep(tiny, "uana", 0)
    assert len(log) == tiny.sweep.budget
    with pytest.raises(ValueError):
        run_sweep(tiny, "na", 0)


def test_avoidance_helpers(tiny):
    region = Region(((0, (0.5, None)),))
    X = np.array([[0.6], [0.2], [0.9]])
    assert count_avoidance(X, region, 0.5) == (2, (2,))
    assert count_avoidance(X, region, math.inf) == (2, (0,))
    sparse = variant_config(tiny, region, "sparse")
    assert sparse.corruption.sparse_regions == (region,)
    assert variant_config(tiny, region, "noisy", 0.2).corruption.noise_regions == ((region, 0.2),)
    with pytest.raises(ValueError):
        variant_config(tiny, region, "weird")
    with pytest.raises(ValueError):
        AvoidanceReport("na", "sparse", 0, 5, (0,), 4)


def test_profile_and_ablation(tiny):
    ctx = make_context(tiny, 0)
    rows = uncertainty_profile(ctx.ensemble, ProfileAxis(0, -1.0, 1.0, 11), ctx.normalizer)
    assert len(rows) == 11 and rows[0].x == -1.0
    assert all(r.sigma_aleatoric > 0 and r.sigma_epistemic >= 0 for r in rows)
    with pytest.raises(ValueError):
        uncertainty_profile(ctx.ensemble, ProfileAxis(3, 0, 1))
    cfg = ExperimentConfig.from_dict(tiny_config_dict(repeat_count=1, weights=[1, 10]))
    ab = ensemble_size_ablation(cfg, [2, 3])
    assert [r.n_members for r in ab] == [2, 3]
    assert set(ablation_summary(ab)) == {2, 3}
    single = ensemble_size_ablation(cfg, [2])
    assert len(single) == 1
    with pytest.raises(ValueError):
        ensemble_size_ablation(cfg, [1])


def test_summary_median_and_negative_errors_rejected():
    rows = [ReportRow("na", 0, i, (0.0,), 0.0, e, math.nan, math.nan, 0, 0.0, 0.0, 0.0) for i, e in enumerate([1.0, 2.0, 9.0])]
    (s,) = summarize(rows, ["na"], 1)
    assert s.nfp_median == 2.0 and s.nfp_mean == 4.0
    with pytest.raises(ValueError):
        ReportRow("na", 0, 0, (0.0,), -1.0, 0.0, 0.0, 0.0, 0, 0.0, 0.0, 0.0)
