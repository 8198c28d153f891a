"""Experiment harness: config parsing, trial determinism, record layout,
and summary stability on a deliberately tiny workload."""

import json
from pathlib import Path

import numpy as np
import pytest

from miosindy.errors import ConfigError
from miosindy.harness import (aggregate, config_hash, load_config,
                              load_records, run_experiment, write_report)

TINY_TOML = """
experiment = "sample_efficiency"
system = "hopf"
trials = 2
seed = 314
noise_percent = [0.5]
train_seconds = [4.0, 6.0]
dt = 0.01
output_dir = "{out}"

[library]
degree = 3
include_bias = true
normalize = true

[[algorithms]]
name = "miosr"
ks = [1, 2, 3]
alphas = [1e-5, 1e-3]

[[algorithms]]
name = "stlsq"
thresholds = [0.05, 0.1, 0.3]
alphas = [1e-3]
"""


def _write_tiny(tmp_path, name="tiny.toml"):
    out = tmp_path / "run"
    cfg_path = tmp_path / name
    cfg_path.write_text(TINY_TOML.format(out=str(out).replace("\\", "/")))
    return cfg_path, out


def test_load_config_defaults_and_overrides(tmp_path):
    cfg_path, out = _write_tiny(tmp_path)
    cfg = load_config(cfg_path)
    assert cfg.experiment == "sample_efficiency"
    assert cfg.trials == 2
    assert cfg.noise_percent == (0.5,)
    assert cfg.train_seconds == (4.0, 6.0)
    assert cfg.split_fraction == pytest.approx(2.0 / 3.0)
    over = load_config(cfg_path, overrides={"trials": 5, "seed": 1,
                                            "output_dir": None})
    assert over.trials == 5 and over.seed == 1
    assert over.output_dir == cfg.output_dir  # None override is ignored


def test_load_config_rejects_bad_inputs(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("experiment = 'nope'\n")
    with pytest.raises(ConfigError):
        load_config(p)  # missing required keys
    p.write_text("experiment = [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(p)  # invalid TOML
    p.write_text("bogus_key = 1\n" + TINY_TOML.format(out="x"))
    with pytest.raises(ConfigError):
        load_config(p)  # unknown top-level key
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    bad = TINY_TOML.format(out="x").replace('"sample_efficiency"', '"nope"')
    p.write_text(bad)
    with pytest.raises(ConfigError):
        load_config(p)
    bad = TINY_TOML.format(out="x").replace('name = "stlsq"', 'name = "grid"')
    p.write_text(bad)
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_hash_tracks_content_not_path(tmp_path):
    a_path, _ = _write_tiny(tmp_path, "a.toml")
    b_path, _ = _write_tiny(tmp_path, "b.toml")
    assert config_hash(load_config(a_path)) == config_hash(load_config(b_path))
    c = load_config(a_path, overrides={"seed": 999})
    assert config_hash(c) != config_hash(load_config(a_path))
    assert len(config_hash(c)) == 12


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("tiny")
    cfg_path, out = _write_tiny(tmp_path)
    cfg = load_config(cfg_path)
    records = run_experiment(cfg)
    return cfg, out, records


def test_run_layout_and_record_content(tiny_run):
    cfg, out, records = tiny_run
    # 2 trials x 2 conditions x 2 algorithms
    assert len(records) == 8
    assert not any("error" in r for r in records)
    files = sorted((out / "records").glob("*.json"))
    assert len(files) == 8
    assert (out / "summary.csv").exists()

    rec = json.loads(files[0].read_text())
    for key in ("experiment", "system", "algorithm", "trial", "seed",
                "config_hash", "condition_label", "coefficients", "supports",
                "metrics", "hyperparams", "wall_times"):
        assert key in rec, key
    assert rec["config_hash"] == config_hash(cfg)
    # coefficients are stored (dims, D): hopf has 2 dims, degree-3 pair basis
    coef = np.asarray(rec["coefficients"], dtype=float)
    assert coef.shape[0] == 2
    assert rec["metrics"]["tpr"] <= 1.0


def test_rerun_is_deterministic_excluding_wall_times(tiny_run, tmp_path):
    cfg, out, records = tiny_run
    rerun_dir = tmp_path / "rerun"
    cfg2 = load_config(Path(str(out)).parent / "tiny.toml",
                       overrides={"output_dir": str(rerun_dir)})
    run_experiment(cfg2)

    first = (out / "summary.csv").read_text().splitlines()
    second = (rerun_dir / "summary.csv").read_text().splitlines()
    assert len(first) == len(second)
    kept_a = [l for l in first if "wall_time" not in l]
    kept_b = [l for l in second if "wall_time" not in l]
    assert kept_a == kept_b
    assert len(kept_a) < len(first)  # wall-time rows exist and were excluded


def test_load_records_and_report(tiny_run, tmp_path):
    cfg, out, records = tiny_run
    loaded = load_records(out)
    assert len(loaded) == len(records)
    report_dir = tmp_path / "report"
    paths = write_report(loaded, report_dir)
    assert (report_dir / "summary.csv").exists()
    assert any(p.name.startswith("figure_") for p in paths)
    # pivot files are plain CSV with a header
    fig = [p for p in paths if p.name.startswith("figure_")][0]
    header = fig.read_text().splitlines()[0]
    assert "," in header


def test_aggregate_groups_and_errors():
    base = {"experiment": "sample_efficiency", "system": "hopf",
            "condition_index": 0, "condition_label": "t4",
            "wall_times": {"fit": 0.5}}
    recs = []
    for trial, tpr in enumerate((1.0, 0.5)):
        recs.append({**base, "algorithm": "miosr", "trial": trial,
                     "metrics": {"tpr": tpr, "rmse": 0.1, "coef_error": 0.01}})
    recs.append({**base, "algorithm": "miosr", "trial": 2, "error": "boom"})
    rows = aggregate(recs)
    tpr_rows = [r for r in rows if r["metric"] == "tpr"]
    assert len(tpr_rows) == 1
    assert tpr_rows[0]["mean"] == pytest.approx(0.75)
    assert tpr_rows[0]["n"] == 2  # the errored record is excluded
    wall = [r for r in rows if r["metric"] == "wall_time_fit"]
    assert wall and wall[0]["mean"] == pytest.approx(0.5)
