import json

import numpy as np
import pytest

from bdsep.cli import main
from bdsep.core import random_flip_spec
from bdsep.dual import read_records
from bdsep.kinetic import read_snapshots

M1 = {"model": "degree_preserving", "p": 1, "beta": 0.8, "N": 12,
      "r": [1.0, 0.5], "alpha": [0.3, 0.6], "c": [[0, 0.4], [0.2, 0]], "a": [[0, 0.1], [0, 0]]}


@pytest.fixture
def specs(tmp_path):
    f = random_flip_spec(np.random.default_rng(0), 3, 0.6, 0.4, 0.1, 0.7).to_dict()
    f["N"] = 7
    paths = {}
    for name, d in (("m1", M1), ("m2", f)):
        paths[name] = tmp_path / f"{name}.json"
        paths[name].write_text(json.dumps(d))
    return paths


def _csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


def test_rates_decompose(tmp_path, capsys):
    good = tmp_path / "t.json"
    good.write_text(json.dumps({"table": [["2/5", "11/10", "7/10", "4/5"], ["3/10", "1/2", "2/5", "1/5"]]}))
    assert main(["rates", "decompose", str(good)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["r"] == ["6/5", "1/2"] and out["alpha"] == ["1/3", "3/5"]
    assert out["ergodicity"] == "unique_stationary"
    bad = tmp_path / "b.json"
    bad.write_text(json.dumps({"table": [[0, 0, 0, 1, 0, 0, 0, 0], [0] * 8, [0] * 8]}))
    assert main(["rates", "decompose", str(bad)]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["error"] == "degree" and out["violations"][0]["site"] == -2


def test_density_and_exact_agree(specs, tmp_path):
    assert main(["density", "--spec", str(specs["m1"]), "--N", "6", "--out", str(tmp_path / "p.csv")]) == 0
    head, rows = _csv(tmp_path / "p.csv")
    assert head == ["site", "rho"] and len(rows) == 7
    assert main(["exact", "--spec", str(specs["m1"]), "--N", "6", "--observables",
                 "density,correlation", "--out", str(tmp_path / "ex")]) == 0
    _, ex = _csv(tmp_path / "ex" / "density.csv")
    assert np.allclose([float(r[1]) for r in rows], [float(r[1]) for r in ex], atol=1e-10)
    head, _ = _csv(tmp_path / "ex" / "correlation.csv")
    assert head == ["sigma", "j", "k", "phi"]


def test_density_rejects_flip(specs, tmp_path):
    assert main(["density", "--spec", str(specs["m2"]), "--out", str(tmp_path / "p.csv")]) == 2


def test_correlations_both_modes(specs, tmp_path):
    out = tmp_path / "c"
    assert main(["correlations", "--model", "1", "--spec", str(specs["m1"]), "--N", "8",
                 "--mode", "both", "--samples", "300", "--starts", "4", "--seed", "2",
                 "--out", str(out)]) == 0
    head, solve = _csv(out / "correlations_solve.csv")
    assert head == ["sigma", "j", "k", "phi", "stderr"]
    _, mc = _csv(out / "correlations_mc.csv")
    table = {tuple(map(int, r[:3])): float(r[3]) for r in solve}
    for r in mc:
        key = tuple(map(int, r[:3]))
        assert abs(float(r[3]) - table[key]) <= 5 * float(r[4]) + 1e-12
    assert main(["correlations", "--model", "2", "--spec", str(specs["m2"]), "--out", str(out)]) == 0
    assert main(["correlations", "--model", "2", "--spec", str(specs["m1"]), "--out", str(out)]) == 2


def test_simulate_writes_snapshots(specs, tmp_path):
    out = tmp_path / "s"
    argv = ["simulate", "--spec", str(specs["m2"]), "--samples", "3", "--burn-in", "50",
            "--batches", "5", "--batch-len", "20", "--snapshots", "--out", str(out), "--seed", "4"]
    assert main(argv) == 0
    first = (out / "density.csv").read_bytes()
    _, configs = read_snapshots(out / "snapshots.bin")
    assert len(configs) == 3 and len(configs[0]) == 6
    summary = json.loads((out / "summary.json").read_text())
    assert summary["replicas"] == 3 and summary["seed"] == 4
    assert main(argv) == 0
    assert (out / "density.csv").read_bytes() == first


def test_dual_records(specs, tmp_path):
    out = tmp_path / "d"
    assert main(["--seed", "1", "dual", "--spec", str(specs["m2"]), "--samples", "500",
                 "--stats", "--records", "4", "--out", str(out)]) == 0
    recs = read_records(out / "records.bin")
    assert len(recs) == 4 and all(r.full for r in recs)
    summary = json.loads((out / "dual.json").read_text())
    assert 0 <= summary["alpha_hat"] <= 1 and summary["seed"] == 1
    assert (out / "survival.csv").exists() and (out / "range.csv").exists()


def test_experiment_exit_codes(tmp_path, out_root):
    good = tmp_path / "g.json"
    good.write_text('{"kind": "rate_roundtrip", "samples": 5, "p": 1}')
    assert main(["experiment", str(good)]) == 0
    assert (out_root / "rate_roundtrip" / "rate_roundtrip.json").exists()
    bad = tmp_path / "b.json"
    bad.write_text('{"kind": "rate_roundtrip",\n "p": 0}')
    assert main(["experiment", str(bad)]) == 2


def test_missing_spec_file(tmp_path, capsys):
    assert main(["exact", "--spec", str(tmp_path / "none.json"), "--N", "5"]) == 2
    assert "error" in capsys.readouterr().err
