import csv
import io
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import short_scenario
from mmpmbm.cli import TRACE_COLUMNS, run_cli, table_rows
from mmpmbm.config import bundled_config_path, load_config, parse_config, with_overrides
from mmpmbm.errors import ConfigurationError
from mmpmbm.simulator import default_scenario, run_monte_carlo, sweep_cells


def bundled():
    return yaml.safe_load(bundled_config_path().read_text())


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_bundled_config_matches_defaults():
    cfg = load_config()
    ref = default_scenario()
    s = cfg.scenario
    assert cfg.mode == "single" and s.num_runs == 100
    assert np.array_equal(s.jms.tpm, ref.jms.tpm)
    assert np.array_equal(s.birth_cov, ref.birth_cov) and np.array_equal(s.birth_means, ref.birth_means)
    for a, b in zip(s.jms.models, ref.jms.models):
        assert np.allclose(a.F, b.F, atol=1e-15) and np.allclose(a.Q, b.Q)
    assert s.targets == ref.targets
    assert s.pd_values == ref.pd_values and s.sigma_values == ref.sigma_values


@pytest.mark.parametrize("path, value, field", [
    (("scenario", "tpm"), [[1.0, 0, 0], [0, 1, 0], [0.5, 0.2, 0.2]], "scenario.tpm"),
    (("scenario", "p_survive"), 1.5, "scenario.p_survive"),
    (("filter", "gm_cap"), "many", "filter.gm_cap"),
    (("run", "mode"), "fast", "run.mode"),
    (("scenario", "sweeps", "pd_values"), [], "scenario.sweeps.pd_values"),
    (("scenario", "colour"), 3, "scenario.colour"),
    (("output", "formats"), ["pdf"], "output.formats"),
])
def test_config_errors_name_the_field(path, value, field):
    data = bundled()
    node = data
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    with pytest.raises(ConfigurationError, match=field.replace(".", r"\.")):
        parse_config(data)


def test_overrides():
    cfg = with_overrides(load_config(), mode="sweep-pd", seed=3, runs=7, out="x")
    assert (cfg.mode, cfg.scenario.rng_seed, cfg.scenario.num_runs, cfg.output.directory) == ("sweep-pd", 3, 7, "x")
    with pytest.raises(ConfigurationError):
        with_overrides(cfg, runs=0)


def test_validate_config_exit_zero(capsys):
    assert run_cli(["--mode", "validate-config"]) == 0
    assert "config OK" in capsys.readouterr().out


def test_missing_config_exit_two(tmp_path, capsys):
    assert run_cli(["--config", str(tmp_path / "nope.yaml")]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_yaml_exit_two(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("run: [unclosed\n")
    assert run_cli(["--config", str(path)]) == 2


def test_unwritable_output_exit_two(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run_cli(["--runs", "1", "--out", str(blocker / "sub")]) == 2


def _short_config(tmp_path):
    data = bundled()
    data["scenario"]["horizon"] = 12
    data["scenario"]["targets"][0]["death"] = 8
    data["scenario"]["targets"][1]["death"] = 10
    data["scenario"]["targets"][2]["birth"] = 3
    data["run"]["workers"] = 1
    return write(tmp_path, data)


def test_cli_outputs_and_determinism(tmp_path, capsys):
    cfg = _short_config(tmp_path)
    assert run_cli(["--config", str(cfg), "--runs", "2", "--out", str(tmp_path / "a")]) == 0
    assert run_cli(["--config", str(cfg), "--runs", "2", "--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / "a" / "trace.csv").read_bytes(), (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b
    rows = list(csv.reader(io.StringIO(a.decode())))
    assert tuple(rows[0]) == TRACE_COLUMNS and len(rows) == 1 + 2 * 12
    for name in ("ospa.svg", "cardinality.svg"):
        root = ET.parse(tmp_path / "a" / name).getroot()
        assert root.tag.endswith("svg")
    assert "Mean OSPA" in capsys.readouterr().out


def test_sweep_pd_table_layout():
    cfg = short_scenario(2, num_runs=1)
    camp = run_monte_carlo(cfg, sweep_cells(cfg, "sweep-pd"), workers=1)
    header, rows = table_rows(camp, "sweep-pd")
    assert header[2:] == ["0.60", "0.65", "0.70", "0.75", "0.80", "0.85", "0.90", "0.95"]
    assert len(rows) == 1 and len(rows[0]) == 10


def test_sweep_noise_table_layout():
    cfg = short_scenario(2, num_runs=1)
    camp = run_monte_carlo(cfg, sweep_cells(cfg, "sweep-noise"), workers=1)
    header, rows = table_rows(camp, "sweep-noise")
    assert header[2:] == ["5", "10", "15", "20", "25"]
    assert [r[1] for r in rows] == ["0.60", "0.95"]
