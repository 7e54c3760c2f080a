import os

import pandas as pd
import pytest

from conftest import EXAMPLES_DIR, REFERENCE_DIR
from dualloop.cli import build_parser, parse_and_dispatch


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_validate_defaults(capsys):
    assert parse_and_dispatch(["validate"]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_example_with_warnings(capsys):
    path = os.path.join(EXAMPLES_DIR, "validate.yaml")
    assert parse_and_dispatch(["validate", "--config", path]) == 0
    assert "valid (" in capsys.readouterr().out


def test_validate_missing_file(capsys):
    assert parse_and_dispatch(["validate", "--config", "/nonexistent/run.yaml"]) == 2
    assert "/nonexistent/run.yaml" in capsys.readouterr().err


def test_validate_bare_frequency(tmp_path):
    path = write_config(tmp_path, "drive:\n  rabi: 7000000\n")
    assert parse_and_dispatch(["validate", "--config", path]) == 2


def test_validate_unknown_scenario():
    assert parse_and_dispatch(["validate", "--name", "fig9"]) == 2


def test_usage_errors():
    assert parse_and_dispatch([]) == 2
    assert parse_and_dispatch(["scenario", "--no-such-flag"]) == 2
    assert parse_and_dispatch(["scenario", "--name", "fig9"]) == 2


def test_version_exits_cleanly(capsys):
    assert parse_and_dispatch(["--version"]) == 0
    assert "dualloop" in capsys.readouterr().out


def test_scenario_writes_outputs(tmp_path, capsys):
    out = str(tmp_path / "out")
    code = parse_and_dispatch(["scenario", "--name", "detuning_equivalence", "--out", out])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "seed=0 config_hash=" in stdout
    h = stdout.split("config_hash=")[1].split()[0]
    assert os.path.exists(os.path.join(out, f"detuning_equivalence__{h}.csv"))
    assert os.path.exists(os.path.join(out, f"detuning_equivalence__{h}.summary.json"))


def test_seed_override_is_announced(tmp_path, capsys):
    out = str(tmp_path / "out")
    parse_and_dispatch(["scenario", "--name", "detuning_equivalence", "--seed", "5", "--out", out])
    assert "seed=5 " in capsys.readouterr().out


def test_workers_do_not_change_hash(tmp_path, capsys):
    out = str(tmp_path / "out")
    args = ["scenario", "--name", "detuning_equivalence", "--out", out]
    parse_and_dispatch(args)
    first = capsys.readouterr().out
    parse_and_dispatch(args + ["--workers", "3"])
    assert capsys.readouterr().out == first


def test_output_dir_from_environment(tmp_path, monkeypatch):
    out = tmp_path / "env-out"
    monkeypatch.setenv("DUALLOOP_OUTPUT_DIR", str(out))
    assert parse_and_dispatch(["scenario", "--name", "detuning_equivalence"]) == 0
    assert any(name.endswith(".summary.json") for name in os.listdir(out))


def test_reference_comparison_and_metrics(tmp_path):
    out = str(tmp_path / "out")
    code = parse_and_dispatch(
        [
            "scenario",
            "--name",
            "detuning_equivalence",
            "--out",
            out,
            "--reference",
            REFERENCE_DIR,
            "--metrics",
        ]
    )
    assert code == 0
    names = os.listdir(out)
    comparison = [n for n in names if n.startswith("detuning_equivalence_comparison__")]
    assert len(comparison) == 1
    report = pd.read_csv(os.path.join(out, comparison[0]))
    assert report["passed"].all()
    metrics = open(os.path.join(out, "metrics.prom")).read()
    assert "dualloop_scenario_runs_total" in metrics


def test_failed_comparison_exits_one(tmp_path):
    reference = write_config(
        tmp_path,
        "metric,expected,abs_tol,rel_tol\nequivalent_detuning_mhz,10.0,0.1,0.0\n",
        name="ref.csv",
    )
    out = str(tmp_path / "out")
    args = ["scenario", "--name", "detuning_equivalence", "--out", out, "--reference", reference]
    assert parse_and_dispatch(args) == 1


def test_cancel_solve_prints_solution(tmp_path, capsys):
    path = os.path.join(EXAMPLES_DIR, "cancel-solve.yaml")
    assert parse_and_dispatch(["cancel-solve", "--config", path, "--out", str(tmp_path)]) == 0
    assert '"r_opt"' in capsys.readouterr().out


def test_cancel_solve_circle(tmp_path, capsys):
    assert parse_and_dispatch(["cancel-solve", "--out", str(tmp_path)]) == 0
    assert '"phase_offset_deg": 180.0' in capsys.readouterr().out


def test_infeasible_calibration_exits_one(tmp_path):
    path = write_config(tmp_path, "noise:\n  calibrate_target_ns: 900.0\n")
    args = ["rabi", "--config", path, "--out", str(tmp_path / "out")]
    assert parse_and_dispatch(args) == 1


def test_field_map_small_grid(tmp_path):
    path = write_config(
        tmp_path,
        "geometry:\n  segments: 128\nsweep:\n  field_map_half_um: 10.0\n  field_map_step_um: 5.0\n",
    )
    out = tmp_path / "out"
    assert parse_and_dispatch(["field-map", "--config", path, "--out", str(out)]) == 0
    names = os.listdir(out)
    assert any(n.startswith("field_map__") and n.endswith(".csv") for n in names)
    assert any(n.startswith("field_map_single__") for n in names)


@pytest.mark.parametrize(
    "command, scenario",
    [("line-scan", None), ("rabi", None), ("scenario", "all")],
)
def test_parser_accepts_commands(command, scenario):
    argv = [command] + (["--name", scenario] if scenario else [])
    args = build_parser().parse_args(argv)
    assert args.command == command
