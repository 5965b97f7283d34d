import json
import subprocess
import sys
import time

import numpy as np
import pytest

from prebim.cli import EXIT_EMPTY, EXIT_INPUT, EXIT_OK, main
from prebim.io import write_dataset_csv
from prebim.model import five_variant_params
from prebim.simulator import simulate_raw


def run(args):
    """Exit code of one invocation, whether returned or raised by argparse."""
    try:
        return main([str(a) for a in args])
    except SystemExit as exc:
        return exc.code


def test_simulate_is_byte_identical(tmp_path):
    out = tmp_path / "a.csv"
    assert run(["simulate", "--scenario", "2,2,6", "--n", 5000, "--seed", 7, "-o", out]) == EXIT_OK
    first = out.read_bytes(), out.with_suffix(".truth.json").read_bytes()
    assert run(["simulate", "--scenario", "2,2,6", "--n", 5000, "--seed", 7, "-o", out]) == EXIT_OK
    assert (out.read_bytes(), out.with_suffix(".truth.json").read_bytes()) == first


def test_simulate_default_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["simulate", "--scenario", "2,2,6", "--n", 100, "--seed", 1]) == EXIT_OK
    assert (tmp_path / "S2-2-6_n100_seed1.csv").exists()
    assert (tmp_path / "S2-2-6_n100_seed1.truth.json").exists()


def test_simulate_one_directional(tmp_path):
    out = tmp_path / "b.csv"
    assert run(["simulate", "--scenario", "2,0,6", "--one-directional", "-o", out]) == EXIT_OK
    truth = json.loads(out.with_suffix(".truth.json").read_text())
    assert truth["params"]["beta_yx"] == 0.0
    assert truth["scenario"]["bidirectional"] is False


def test_simulate_correlated(tmp_path):
    out = tmp_path / "c.csv"
    assert run(["simulate", "--scenario", "2,2,6", "--correlated-valid", "--n", 5000, "-o", out]) == EXIT_OK
    truth = json.loads(out.with_suffix(".truth.json").read_text())
    j, k = truth["labels"]["dependent_pair"]
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert abs(np.corrcoef(data[:, 2 + j], data[:, 2 + k])[0, 1]) > 0.1


def test_estimate_five_variant(tmp_path, capsys):
    s = simulate_raw(five_variant_params(), 10_000, np.random.default_rng(0))
    path = tmp_path / "five_variant.csv"
    write_dataset_csv(path, s.x, s.y, s.genotypes)
    assert run(["estimate", path, "--trace"]) == EXIT_OK
    doc = json.loads((tmp_path / "five_variant.estimate.json").read_text())
    assert doc["schema_version"] == 1
    assert abs(doc["beta_hat_xy"] - 0.6) < 0.1
    assert {"G_1", "G_3"} <= set(doc["assigned_xy"])
    assert "trace" in doc
    assert "X->Y" in capsys.readouterr().out


def test_discover_writes_sets(tmp_path):
    s = simulate_raw(five_variant_params(), 10_000, np.random.default_rng(1))
    path = tmp_path / "five_variant.csv"
    write_dataset_csv(path, s.x, s.y, s.genotypes)
    out = tmp_path / "sets.json"
    assert run(["discover", path, "-W", 3, "--merge-same-direction=false", "-o", out]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["config"]["max_set_size"] == 3
    assert doc["config"]["merge_same_direction"] is False
    assert doc["sets"] and "beta_hat_xy" not in doc


def test_single_variant_file_is_rejected(tmp_path, capsys):
    path = tmp_path / "g1.csv"
    path.write_text("x,y,G_1\n" + "\n".join(f"{i},{i % 3},{i % 2}" for i in range(10)) + "\n")
    assert run(["estimate", path]) == EXIT_INPUT
    assert "at least two valid IVs" in capsys.readouterr().err


def test_all_invalid_gives_empty_result(tmp_path):
    out = tmp_path / "inv.csv"
    assert run(["simulate", "--scenario", "0,0,6", "--n", 5000, "--seed", 0, "-o", out]) == EXIT_OK
    assert run(["estimate", out]) == EXIT_EMPTY
    doc = json.loads(out.with_suffix(".estimate.json").read_text())
    assert doc["sets"] == [] and doc["beta_hat_xy"] is None and doc["beta_hat_yx"] is None


@pytest.mark.parametrize("args", [
    ["estimate", "missing.csv"],
    ["simulate", "--scenario", "2,2"],
    ["simulate", "--scenario", "5,5,6"],
    ["discover", "x.csv", "--alpha", "1.5"],
    ["discover", "x.csv", "-W", "1"],
    ["bench", "no_such_sweep"],
    [],
])
def test_input_errors_exit_1(tmp_path, monkeypatch, args):
    monkeypatch.chdir(tmp_path)
    assert run(args) == EXIT_INPUT


def test_bench_smoke(tmp_path, capsys):
    start = time.perf_counter()
    assert run(["bench", "smoke", "-o", tmp_path / "a", "--plot-data"]) == EXIT_OK
    assert time.perf_counter() - start < 5.0
    assert run(["bench", "smoke", "-o", tmp_path / "b"]) == EXIT_OK
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    assert (tmp_path / "a" / "plot_data.csv").exists()
    assert not (tmp_path / "b" / "plot_data.csv").exists()
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["reports"]) == 1
    assert "CSR X->Y" in capsys.readouterr().out


def test_bench_row_count(tmp_path):
    assert run(["bench", "table1_desk", "--reps", 1, "-o", tmp_path]) == EXIT_OK
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 18


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "prebim", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
