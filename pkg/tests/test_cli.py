import json

import numpy as np
import pytest

from pyric.autodiff import Var
from pyric.cli import main
from pyric.data import read_dataset, write_dataset

TRAIN = "2010-01-01:2010-12-31"
TEST = "2011-01-01:2011-12-31"


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--grid", "5x5", "--days", "730", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = main(["train", "--data", str(synth_dir), "--learn", "ic.chi_scale", "--lr", "5", "--epochs", "2",
                 "--validation-days", "180", "--threads", "1", "--out", str(out)])
    assert code == 0
    return out


def test_synth_is_byte_identical(synth_dir, tmp_path):
    assert main(["synth", "--grid", "5x5", "--days", "730", "--seed", "7", "--out", str(tmp_path)]) == 0
    files = sorted(p.relative_to(synth_dir) for p in synth_dir.rglob("*") if p.is_file())
    for f in files:
        if f.name != "config.json":  # echoes --out
            assert (tmp_path / f).read_bytes() == (synth_dir / f).read_bytes(), f
    a, b = (json.loads((d / "config.json").read_text()) for d in (tmp_path, synth_dir))
    assert {**a, "out": None} == {**b, "out": None}


def test_invalid_scenario_exits_2(tmp_path, capsys):
    assert main(["synth", "--scenario", "volcano", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_manifest_exits_1(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none" / "manifest.json"), "--out", str(tmp_path)]) == 1


def test_no_fires_exits_3(synth_dir, tmp_path, capsys):
    d = read_dataset(synth_dir)
    d.fire.fire[:] = 0
    write_dataset(d, tmp_path / "data")
    code = main(["train", "--data", str(tmp_path / "data"), "--epochs", "1", "--out", str(tmp_path / "o")])
    assert code == 3
    assert "no observed fires" in capsys.readouterr().err


def test_grid_mismatch_exits_4(synth_dir, tmp_path):
    write_dataset(read_dataset(synth_dir), tmp_path / "data")
    manifest = tmp_path / "data" / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["fire"]["grid"]["lat"] = [x + 1.0 for x in doc["fire"]["grid"]["lat"]]  # observations on another grid
    manifest.write_text(json.dumps(doc))
    code = main(["eval", "--data", str(tmp_path / "data"), "--train-range", TRAIN, "--test-range", TEST,
                 "--out", str(tmp_path / "o")])
    assert code == 4


def test_train_outputs(trained_dir):
    for name in ("ledger.json", "checkpoint.json", "history.csv", "config.json"):
        assert (trained_dir / name).exists()
    cfg = json.loads((trained_dir / "config.json").read_text())
    assert cfg["learning_rate"] == 5.0 and cfg["max_epochs"] == 2 and cfg["threads"] == 1


def test_zero_learning_rate_returns_input_ledger(synth_dir, tmp_path):
    assert main(["train", "--data", str(synth_dir), "--learn", "ic.chi_scale", "--lr", "0", "--epochs", "1",
                 "--validation-days", "180", "--out", str(tmp_path)]) == 0
    from pyric.params import ParameterSet

    start = ParameterSet.default().only_learn(["ic.chi_scale"])
    assert ParameterSet.load(tmp_path / "ledger.json") == start


def test_config_file_then_flags(synth_dir, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"fuzzy_radius": 0, "quantile_q": 0.6}))
    out = tmp_path / "o"
    assert main(["eval", "--config", str(conf), "--quantile", "0.7", "--data", str(synth_dir), "--train-range", TRAIN,
                 "--test-range", TEST, "--out", str(out)]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["fuzzy_radius"] == 0 and echoed["quantile_q"] == 0.7
    summary = json.loads((out / "summary.json").read_text())
    assert summary["fuzzy_radius"] == 0


def test_unknown_config_key_exits_2(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"nonsense": 1}))
    assert main(["gradcheck", "--config", str(conf)]) == 2


def test_eval_writes_schema_valid_reports(synth_dir, tmp_path):
    assert main(["eval", "--data", str(synth_dir), "--train-range", TRAIN, "--test-range", TEST,
                 "--out", str(tmp_path)]) == 0
    header = (tmp_path / "report.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["row", "col", "lat", "lon"] and "EDI" in header
    assert (tmp_path / "map.png").read_bytes()[:4] == b"\x89PNG"


def test_overlapping_ranges_exit_2(synth_dir, tmp_path):
    assert main(["eval", "--data", str(synth_dir), "--train-range", TRAIN, "--test-range", "2010-06-01:2011-06-01",
                 "--out", str(tmp_path)]) == 2


def test_self_diff_is_zero_map(synth_dir, trained_dir, tmp_path):
    ledger = str(trained_dir / "ledger.json")
    assert main(["diff", "--data", str(synth_dir), "--trained", ledger, "--untrained", ledger,
                 "--train-range", TRAIN, "--test-range", TEST, "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["aggregate_delta"] == 0.0
    rows = [r.split(",") for r in (tmp_path / "report.csv").read_text().splitlines()[1:]]
    assert all(r[6] in ("0.0", "") for r in rows)


def test_train_and_eval_deterministic_across_threads(synth_dir, tmp_path):
    outs = []
    for threads in ("1", "3"):
        t_out, e_out = tmp_path / f"t{threads}", tmp_path / f"e{threads}"
        main(["train", "--data", str(synth_dir), "--learn", "ic.chi_scale,spread.wind_coef", "--lr", "2",
              "--epochs", "2", "--validation-days", "180", "--threads", threads, "--out", str(t_out)])
        main(["eval", "--data", str(synth_dir), "--ledger", str(t_out / "ledger.json"), "--train-range", TRAIN,
              "--test-range", TEST, "--threads", threads, "--out", str(e_out)])
        outs.append([(t_out / f).read_bytes() for f in ("ledger.json", "checkpoint.json", "history.csv")]
                    + [(e_out / f).read_bytes() for f in ("report.csv", "map.png", "summary.json")])
    assert outs[0] == outs[1]


def test_gradcheck_passes(tmp_path, capsys):
    assert main(["gradcheck", "--points", "20", "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "summary.json").read_text())
    assert result["ic"]["max_rel_error"] <= 1e-4 and result["edi_loss"]["max_rel_error"] <= 1e-4
    assert result["ic"]["points"] == 20


def test_gradcheck_catches_a_corrupted_primitive(monkeypatch):
    def bad_mul(self, other):
        o = self.tape.lift(other)
        return self.tape.record("mul", (self, o), self.value * o.value, (o.value, 1.01 * self.value))

    monkeypatch.setattr(Var, "__mul__", bad_mul)
    assert main(["gradcheck", "--points", "3"]) != 0


def test_threads_must_be_positive(tmp_path):
    assert main(["synth", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_history_best_so_far_validation_never_decreases(trained_dir):
    lines = (trained_dir / "history.csv").read_text().splitlines()
    col = lines[0].split(",").index("validation_edi")
    vals = [float(r.split(",")[col]) for r in lines[1:]]
    best = np.maximum.accumulate(vals)
    assert np.all(np.diff(best) >= 0)
