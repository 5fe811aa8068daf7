import subprocess
import sys

import pandas as pd
import pytest

from energy_fs.cli import main, read_config


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--households", "3", "--days", "4", "--seed", "7",
                 "--out", str(root / "raw")]) == 0
    assert main(["ingest", "--raw", str(root / "raw"), "--out", str(root / "store")]) == 0
    (root / "fast.cfg").write_text("# small settings\nk=2\nrepeats=1\nrounds=8\nmin_leaf=5\n"
                                   "depth=3\nseed=3\n")
    return root


def test_synth_writes_three_files(tmp_path):
    assert main(["synth", "--households", "2", "--days", "2", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["consumption.csv", "metadata.csv",
                                                          "weather.csv"]


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2


def test_missing_store_is_runtime_error(tmp_path, capsys):
    assert main(["get", "--store", str(tmp_path / "none")]) == 1
    assert capsys.readouterr().err.startswith("E-")


def test_missing_required_flag_is_usage_error(capsys):
    assert main(["ablate"]) == 2


def test_register_and_get(work, capsys):
    store = str(work / "store")
    assert main(["register", "--store", store]) == 0
    out = work / "g.csv"
    assert main(["get", "--store", store, "--entities", "house1,house2",
                 "--from", "2018-01-02T08:00:00Z", "--to", "2018-01-02T12:00:00Z",
                 "--features", "energy,temperature", "--out", str(out)]) == 0
    frame = pd.read_csv(out, comment="#")
    assert list(frame.columns) == ["residential_id", "timestamp", "energy", "temperature",
                                   "__missing__energy", "__missing__temperature"]
    assert len(frame) == 2 * 5


def test_unknown_feature_exit_code(work, capsys):
    assert main(["get", "--store", str(work / "store"), "--features", "voltage"]) == 1
    assert capsys.readouterr().err.startswith("E-")


def test_demo_chain(work):
    store = str(work / "store")
    cfg = str(work / "fast.cfg")
    table = work / "abl.csv"
    assert main(["ablate", "--store", store, "--config", cfg, "--out", str(table)]) == 0
    frame = pd.read_csv(table, comment="#")
    assert len(frame) == 7
    assert (work / "abl.txt").exists()
    assert table.read_text().startswith("# seed=3 ")

    model = work / "m.txt"
    assert main(["train", "--store", store, "--config", cfg, "--out", str(model)]) == 0
    preds = work / "p.csv"
    assert main(["predict", "--store", store, "--model", str(model), "--out", str(preds)]) == 0
    p = pd.read_csv(preds, comment="#")
    assert list(p.columns) == ["residential_id", "timestamp", "target_time", "energy_next",
                               "prediction"]
    assert (p["target_time"] - p["timestamp"] == 3600).all()

    imp = work / "imp.csv"
    assert main(["importance", "--store", store, "--config", cfg, "--out", str(imp)]) == 0
    scores = pd.read_csv(imp, comment="#")
    assert list(scores["rank"]) == list(range(1, len(scores) + 1))


def test_flags_override_config(work):
    store = str(work / "store")
    out = work / "override.csv"
    assert main(["ablate", "--store", store, "--config", str(work / "fast.cfg"),
                 "--seed", "11", "--out", str(out)]) == 0
    assert out.read_text().startswith("# seed=11 ")


def test_bench_report(work):
    out = work / "bench.csv"
    assert main(["bench", "--store", str(work / "store"), "--reps", "3", "--threads", "2",
                 "--out", str(out)]) == 0
    frame = pd.read_csv(out, comment="#")
    assert sorted(frame["strategy"]) == ["eager", "lazy", "partitioned"]


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nk = 4\n\nseed=2\n")
    assert read_config(p) == {"k": "4", "seed": "2"}
    p.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        read_config(p)


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "energy_fs.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for name in ("synth", "ingest", "register", "get", "bench", "train", "predict", "ablate",
                 "importance"):
        assert name in out.stdout
