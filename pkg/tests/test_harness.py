import json

import numpy as np
import pytest

from bdsep.core import random_degree_preserving
from bdsep.harness import ConfigError, ExperimentConfig, csv_text, run_experiment, svg_plot
from bdsep.fitting import fit_power_law


def _cfg(text, tmp_path=None):
    return ExperimentConfig.from_text(text, "cfg.json", tmp_path)


@pytest.mark.parametrize("text,line,needle", [
    ('{\n  "kind": "hydrostatic_m1",\n  "N": [100, 50]\n}', 3, "strictly increasing"),
    ('{\n  "kind": "hydrostatic_m1",\n  "seed": 1,\n  "bogus": 2\n}', 4, "unknown field"),
    ('{\n  "kind": "nope"\n}', 2, "unknown experiment kind"),
    ('{\n  "kind": "dual_bounds",\n  "ell": []\n}', 3, "nonempty"),
    ('{\n  "kind": "hydrostatic_m2",\n  "samples": -4\n}', 3, "positive integer"),
    ('{\n  "kind": "hydrostatic_m1",\n  "N": [10, 20,\n}', 4, "invalid JSON"),
])
def test_config_errors_carry_line_numbers(text, line, needle):
    with pytest.raises(ConfigError) as exc:
        _cfg(text)
    msg = str(exc.value)
    assert msg.startswith(f"cfg.json:{line}:"), msg
    assert needle in msg


def test_config_model_mismatch(tmp_path):
    (tmp_path / "flip.json").write_text(json.dumps({"model": "flip", "rates": [1, 1, 1, 1]}))
    with pytest.raises(ConfigError, match="model-1 spec"):
        _cfg('{"kind": "hydrostatic_m1", "spec": "flip.json"}', tmp_path)


def test_defaults_filled():
    cfg = _cfg('{"kind": "dual_bounds"}')
    assert cfg.N == [129] and cfg.ell == [8, 16, 32, 64] and cfg.samples == 10000


def test_byte_identical_rerun(tmp_path):
    text = '{"kind": "hydrostatic_m1", "N": [20, 40, 80], "seed": 5}'
    r1 = run_experiment(_cfg(text), tmp_path / "a")
    r2 = run_experiment(_cfg(text), tmp_path / "b")
    for f1, f2 in zip(r1.files, r2.files):
        assert f1.read_bytes() == f2.read_bytes()
    assert r1.passed
    head = r1.files[0].read_text().splitlines()
    assert head[0].startswith("# spec_hash=") and head[1] == "# seed=5"


def test_output_root_from_environment(out_root):
    rep = run_experiment(_cfg('{"kind": "rate_roundtrip", "samples": 10, "p": 1}'))
    assert rep.passed
    assert all(str(f).startswith(str(out_root / "rate_roundtrip")) for f in rep.files)


@pytest.mark.parametrize("text", [
    '{"kind": "hydrostatic_m2", "N": [5, 6, 7], "samples": 2000, "seed": 1}',
    '{"kind": "hydrostatic_m3", "N": [6, 8, 10], "seed": 1}',
    '{"kind": "correlation_decay", "N": [20, 40, 80], "seed": 1}',
    '{"kind": "dual_bounds", "N": [65], "ell": [4, 8, 16], "samples": 2000, "seed": 1}',
    '{"kind": "speeded_scaling", "N": [6], "ell": [1, 4, 16], "seed": 0}',
])
def test_small_experiments(tmp_path, text):
    rep = run_experiment(_cfg(text), tmp_path)
    summary = json.loads(rep.files[1].read_text())
    assert summary["passed"] == rep.passed
    assert rep.rows


def test_svg_and_csv_are_text():
    fit = fit_power_law([(1, 1), (2, 0.5), (4, 0.25)])
    svg = svg_plot([1, 2, 4], [1, 0.5, 0.25], "N", "err", "t", {"seed": 0}, fit)
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert svg.rstrip().endswith("</svg>")
    text = csv_text(["a", "b"], [[1, 0.5]], {"seed": 0})
    assert text.splitlines()[-2:] == ["a,b", "1,0.5"]


def test_m1_table_has_four_rows(tmp_path):
    rep = run_experiment(_cfg('{"kind": "hydrostatic_m1", "seed": 2}'), tmp_path)
    assert len(rep.rows) == 4 and rep.passed


def test_every_file_is_stamped(tmp_path):
    rep = run_experiment(_cfg('{"kind": "hydrostatic_m1", "N": [20, 40, 80], "seed": 3}'), tmp_path)
    for f in rep.files:
        text = f.read_text()
        assert "spec_hash" in text and "seed" in text and "version" in text
