import json

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import tiny_config_dict
from uainv.harness.cli import main
from uainv.serialization import load_model, save_rows


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    r = CliRunner()
    ok(r.invoke(main, ["gen-data", "--nfp", "sine1d", "-n", "300", "--seed", "1", "-o", str(d / "data.txt")]))
    ok(r.invoke(main, ["train-surrogate", "--data", str(d / "data.txt"), "--hidden", "16,16", "--epochs", "20",
                       "--lr", "0.01", "-o", str(d / "net.json")]))
    ok(r.invoke(main, ["train-ensemble", "--data", str(d / "data.txt"), "-M", "2", "--mean-hidden", "16",
                       "--var-hidden", "8", "--stage1-epochs", "15", "--stage2-epochs", "10", "-o", str(d / "ens.json")]))
    save_rows(d / "targets.txt", np.array([[0.5], [-0.3]]))
    (d / "cfg.json").write_text(json.dumps(tiny_config_dict(repeat_count=1)))
    return d


def ok(result):
    assert result.exit_code == 0, result.output + repr(result.exception)
    return result


def test_models_carry_meta(workdir):
    b = load_model(workdir / "ens.json")
    assert b.kind == "ensemble" and b.model.M == 2
    assert b.meta["nfp"]["kind"] == "sine1d" and len(b.meta["design_box"]) == 2


@pytest.mark.parametrize("method,model", [("na", "net.json"), ("na-ensemble", "ens.json"), ("uana", "ens.json")])
def test_invert_writes_csv_and_json(workdir, method, model):
    out = workdir / f"inv_{method}.csv"
    ok(CliRunner().invoke(main, ["invert", "--model", str(workdir / model), "--method", method,
                                 "--targets", str(workdir / "targets.txt"), "--iters", "50", "--restarts", "2",
                                 "-o", str(out)]))
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and "nfp_error" in lines[0]
    doc = json.loads(out.with_suffix(".json").read_text())
    assert len(doc) == 2


def test_invert_wrong_model_kind_exits_nonzero(workdir):
    r = CliRunner().invoke(main, ["invert", "--model", str(workdir / "net.json"), "--method", "uana",
                                  "--targets", str(workdir / "targets.txt"), "-o", str(workdir / "x.csv")])
    assert r.exit_code != 0


def test_invert_fixed_init_and_regularizers(workdir):
    ok(CliRunner().invoke(main, ["invert", "--model", str(workdir / "ens.json"), "--method", "uana",
                                 "--targets", str(workdir / "targets.txt"), "--init", "fixed:0.1",
                                 "--boundary", "1", "--select", "total_loss", "--iters", "20", "--restarts", "1",
                                 "-o", str(workdir / "fixed.csv")]))


def test_tandem_train_and_query(workdir):
    r = CliRunner()
    ok(r.invoke(main, ["tandem-train", "--model", str(workdir / "ens.json"), "--data", str(workdir / "data.txt"),
                       "--hidden", "16", "--epochs", "3", "--candidates", "2", "-o", str(workdir / "inv.json")]))
    assert load_model(workdir / "inv.json").kind == "inverse"
    ok(r.invoke(main, ["tandem-query", "--inverse", str(workdir / "inv.json"), "--targets",
                       str(workdir / "targets.txt"), "-o", str(workdir / "q.csv")]))
    assert len((workdir / "q.csv").read_text().splitlines()) == 3


def test_bench_deterministic(workdir):
    r = CliRunner()
    for name in ("b1", "b2"):
        ok(r.invoke(main, ["bench", "--config", str(workdir / "cfg.json"), "--out-dir", str(workdir / name)]))
    assert (workdir / "b1/bench.csv").read_bytes() == (workdir / "b2/bench.csv").read_bytes()
    assert (workdir / "b1/summary.json").exists() and (workdir / "b1/timing.json").exists()


def test_sweep_profile_pareto(workdir):
    r = CliRunner()
    res = ok(r.invoke(main, ["sweep", "--config", str(workdir / "cfg.json"), "-o", str(workdir / "sw.json")]))
    assert len(json.loads((workdir / "sw.json").read_text())["log"]) == 5 and "best" in res.output
    ok(r.invoke(main, ["profile", "--model", str(workdir / "ens.json"), "--dim", "0", "--start", "-2",
                       "--stop", "2", "--num", "9", "-o", str(workdir / "prof.csv")]))
    assert len((workdir / "prof.csv").read_text().splitlines()) == 10
    ok(r.invoke(main, ["pareto", "--model", str(workdir / "ens.json"), "--target", "0.5", "--population", "20",
                       "--generations", "3", "-o", str(workdir / "front.csv")]))
    assert (workdir / "front.json").exists()
    bad = r.invoke(main, ["profile", "--model", str(workdir / "net.json"), "--dim", "0", "--start", "0",
                          "--stop", "1", "-o", str(workdir / "p2.csv")])
    assert bad.exit_code != 0


def test_avoidance_and_ablation(workdir):
    r = CliRunner()
    cfg = workdir / "cfg_small.json"
    cfg.write_text(json.dumps(tiny_config_dict(repeat_count=1, methods=["na", "uana"], weights=[1, 10])))
    res = ok(r.invoke(main, ["avoidance", "--config", str(cfg), "--region", "0:0.5:", "--variants", "sparse",
                             "--out-dir", str(workdir / "av")]))
    assert "sparse" in res.output and (workdir / "av/avoidance.csv").exists()
    ok(r.invoke(main, ["ablate-ensemble", "--config", str(cfg), "--sizes", "2,3", "--out-dir", str(workdir / "ab")]))
    assert len((workdir / "ab/ablation.csv").read_text().splitlines()) == 3


def test_bad_config_is_a_clean_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"nope": 1}')
    r = CliRunner().invoke(main, ["bench", "--config", str(p)])
    assert r.exit_code != 0 and "unknown config keys" in r.output
