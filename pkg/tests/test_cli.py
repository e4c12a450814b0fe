"""
Command-line surface: argument handling, exit codes and output files
"""

import csv

import pytest

from starswipt.cli.deps import parse_values
from starswipt.cli.validate import tiny_config
from starswipt.core.exceptions import ConfigError
from starswipt.main import build_parser, cli_main
from starswipt.schemas.scenario import ScenarioConfig
from starswipt.services.oracle import FULL_GRID_DENSITY

TINY_SCENARIO = """\
[scenario]
n_tx = 2
n_ris = 2
n_ir = 1
n_uer = 1
e_th = 0.2
r_c_min = 0.2
n_realizations = 1
max_outer = 2
n_max = 10
m_max = 10
l_max = 20
n_ball_samples = 100
seed = 3
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_SCENARIO)
    return path


# =============================================================================
# Parsing and errors
# =============================================================================


def test_subcommand_is_required(capsys):
    assert cli_main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_two(tmp_path):
    assert cli_main(["simulate", "--out", str(tmp_path), "--bogus"]) == 2


def test_missing_config_names_the_path(tmp_path, capsys):
    missing = tmp_path / "absent.ini"
    code = cli_main(["simulate", "--config", str(missing), "--out", str(tmp_path / "out")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_value_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("n_tx = 0\n")
    assert cli_main(["simulate", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "n_tx" in capsys.readouterr().err


def test_unknown_sweep_parameter_exits_two(scenario_file, tmp_path, capsys):
    code = cli_main(["sweep", "--config", str(scenario_file), "--param", "antennas", "--values", "1,2",
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "antennas" in capsys.readouterr().err


def test_output_path_must_be_a_directory(scenario_file, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli_main(["simulate", "--config", str(scenario_file), "--out", str(blocker)]) == 2


def test_parse_values():
    assert parse_values("15, 20,25") == [15.0, 20.0, 25.0]
    with pytest.raises(ConfigError):
        parse_values("15,abc")
    with pytest.raises(ConfigError):
        parse_values(" , ")


def test_parser_knows_every_command():
    parser = build_parser()
    for argv in (["simulate", "--out", "x"], ["sweep", "--param", "nu", "--values", "1", "--out", "x"],
                 ["convergence", "--out", "x"], ["validate", "--quick"]):
        args = parser.parse_args(argv)
        assert callable(args.handler)


def test_tiny_instances_for_validation():
    cfg = tiny_config(ScenarioConfig(seed=5), 2, quick=True)
    assert (cfg.n_tx, cfg.n_ris, cfg.n_ir, cfg.n_uer) == (2, 2, 1, 1)
    assert cfg.seed == 7
    assert cfg.max_outer == 2
    # Quick mode trims samples and instances, never the grid
    assert cfg.grid_density == FULL_GRID_DENSITY
    assert tiny_config(ScenarioConfig(grid_density=1), 0, quick=False).grid_density == FULL_GRID_DENSITY


# =============================================================================
# Runs
# =============================================================================


@pytest.mark.slow
def test_simulate_writes_records(scenario_file, tmp_path):
    out = tmp_path / "run"
    assert cli_main(["simulate", "--config", str(scenario_file), "--out", str(out)]) == 0
    with (out / "records.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 1 + 2
    assert (out / "aggregate.csv").is_file()
    assert (out / "results.db").is_file()


@pytest.mark.slow
def test_sweep_writes_one_row_per_value(scenario_file, tmp_path):
    out = tmp_path / "sweep"
    code = cli_main(["sweep", "--config", str(scenario_file), "--param", "pt_db", "--values", "15,20,25,30",
                     "--out", str(out)])
    assert code in (0, 1)
    with (out / "aggregate.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert len(rows) == 1 + 4
    assert (out / "r_sec.dat").read_text().count("\n") == 4


@pytest.mark.slow
def test_convergence_writes_traces(scenario_file, tmp_path):
    out = tmp_path / "conv"
    cli_main(["convergence", "--config", str(scenario_file), "--out", str(out)])
    for name in ("spca_trace.csv", "ris_trace.csv", "outer_trace.csv", "outer_convergence.dat"):
        assert (out / name).is_file()


@pytest.mark.slow
def test_quick_validation_passes(tmp_path):
    assert cli_main(["validate", "--quick", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "audit.csv").is_file()
    assert (tmp_path / "validation.csv").is_file()
