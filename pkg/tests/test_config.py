import glob
import os

import pytest

from conftest import EXAMPLES_DIR
from dualloop.config import Config, load_config, output_dir, parse_frequency, preflight
from dualloop.middleware.error_handler import ConfigParseError, ConfigValidationError


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_validate():
    cfg = load_config()
    assert cfg.name == "fig1d_line_scan"
    assert cfg.seed == 0
    assert cfg.drive.rabi == pytest.approx(7e6)
    assert cfg.spin.resonance == pytest.approx(3.14e9)
    assert cfg.noise.rabi is None
    assert preflight(cfg) == []


@pytest.mark.parametrize(
    "text, hz",
    [("7 MHz", 7e6), ("2.5kHz", 2.5e3), ("3.14 GHz", 3.14e9), ("0 Hz", 0.0), ("1e3 Hz", 1e3)],
)
def test_parse_frequency(text, hz):
    assert parse_frequency(text) == pytest.approx(hz)


@pytest.mark.parametrize("value", [7, 7.0, "7", "7 mhz", "MHz", True])
def test_parse_frequency_requires_unit(value):
    with pytest.raises(ValueError):
        parse_frequency(value)


def test_user_file_merges_over_defaults(tmp_path):
    path = write(tmp_path, "geometry:\n  spacing_um: 80.0\nscenario:\n  seed: 4\n")
    cfg = load_config(path)
    assert cfg.geometry.spacing_um == 80.0
    assert cfg.geometry.outer_diameter_um == 38.0
    assert cfg.seed == 4


def test_bare_number_frequency_is_schema_error(tmp_path):
    path = write(tmp_path, "drive:\n  rabi: 7000000\n")
    with pytest.raises(ConfigValidationError) as info:
        load_config(path)
    assert "drive.rabi" in info.value.fields
    assert path in str(info.value)


def test_unknown_key_is_rejected(tmp_path):
    path = write(tmp_path, "geometry:\n  diameter_um: 10\n")
    with pytest.raises(ConfigValidationError) as info:
        load_config(path)
    assert "geometry.diameter_um" in info.value.fields


def test_sweep_ranges_are_checked(tmp_path):
    path = write(tmp_path, "sweep:\n  imbalance_db: [3.0]\n")
    with pytest.raises(ConfigValidationError):
        load_config(path)
    path = write(tmp_path, "sweep:\n  dual_fit_window_um: [50.0, 22.0]\n", "window.yaml")
    with pytest.raises(ConfigValidationError):
        load_config(path)


def test_malformed_yaml_reports_line_and_column(tmp_path):
    path = write(tmp_path, "geometry:\n  spacing_um: [60.0\nspin: {}\n")
    with pytest.raises(ConfigParseError) as info:
        load_config(path)
    assert info.value.line is not None and info.value.line >= 2
    assert info.value.column is not None
    assert str(info.value).startswith(path)


def test_missing_file_names_path(tmp_path):
    path = str(tmp_path / "absent.yaml")
    with pytest.raises(ConfigParseError) as info:
        load_config(path)
    assert path in str(info.value)


def test_non_mapping_top_level(tmp_path):
    with pytest.raises(ConfigParseError):
        load_config(write(tmp_path, "- 1\n- 2\n"))


def test_environment_overrides():
    environ = {
        "DUALLOOP_SCENARIO_SEED": "7",
        "DUALLOOP_GEOMETRY_Z_UM": "2.5",
        "DUALLOOP_SWEEP_PENALTY_DB": "[-40, -20]",
        "DUALLOOP_DRIVE_RABI": "5 MHz",
    }
    cfg = load_config(environ=environ)
    assert cfg.seed == 7
    assert cfg.geometry.z_um == 2.5
    assert cfg.sweep.penalty_db == [-40.0, -20.0]
    assert cfg.drive.rabi == pytest.approx(5e6)


def test_bad_environment_value_is_config_error():
    with pytest.raises(ConfigValidationError) as info:
        load_config(environ={"DUALLOOP_SCENARIO_SEED": "seven"})
    assert "DUALLOOP_SCENARIO_SEED" in info.value.fields


def test_dotted_lookup():
    config = Config()
    assert config.get("geometry.spacing_um") == 60.0
    assert config.get("geometry.missing", "fallback") == "fallback"


def test_config_hash_ignores_workers_only():
    cfg = load_config()
    assert len(cfg.config_hash()) == 8
    assert cfg.with_overrides(workers=8).config_hash() == cfg.config_hash()
    assert cfg.with_overrides(seed=1).config_hash() != cfg.config_hash()
    assert cfg.with_overrides(name="fig4_rabi_suite").config_hash() != cfg.config_hash()


def test_preflight_warnings(tmp_path):
    inside = load_config(write(tmp_path, "geometry:\n  spacing_um: 10.0\n"))
    assert any("neighbour site inside outer loop" in w for w in preflight(inside))
    overlap = load_config(write(tmp_path, "geometry:\n  spacing_um: 30.0\n", "b.yaml"))
    assert any("neighbouring outer loops overlap" in w for w in preflight(overlap))
    swapped = load_config(
        write(tmp_path, "geometry:\n  inner_diameter_um: 40.0\n", "c.yaml")
    )
    assert any("inner diameter" in w for w in preflight(swapped))


def test_derived_models():
    cfg = load_config()
    params = cfg.spin_params()
    assert params.t_base == pytest.approx(761e-9)
    assert params.shots == 2000
    noise = cfg.noise_model(1e6, 0.03, aggressors=2)
    assert noise.effective_rabi_hz == pytest.approx(2e6 * 0.03**0.5)
    tau = cfg.tau_grid()
    assert len(tau) == 201 and tau[-1] == pytest.approx(1e-6)
    assert cfg.odmr.params().sigma_hz == pytest.approx(2.5e6)


def test_rectangle_geometry_builds_squares(tmp_path):
    cfg = load_config(write(tmp_path, "geometry:\n  shape: rectangle\n"))
    loop = cfg.geometry.outer_loop()
    assert loop.shape.width == pytest.approx(38e-6)
    assert loop.shape.height == pytest.approx(38e-6)


def test_output_dir(monkeypatch):
    assert output_dir("given") == "given"
    monkeypatch.setenv("DUALLOOP_OUTPUT_DIR", "from-env")
    assert output_dir() == "from-env"
    monkeypatch.delenv("DUALLOOP_OUTPUT_DIR")
    assert output_dir() == "results"


@pytest.mark.parametrize(
    "path", sorted(glob.glob(os.path.join(EXAMPLES_DIR, "*.yaml"))), ids=os.path.basename
)
def test_shipped_examples_validate(path):
    load_config(path)
