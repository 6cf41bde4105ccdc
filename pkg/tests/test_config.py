import math

import pytest

from craneswing.config import load_config, parse_config
from craneswing.errors import ConfigError, LoadFailureError


def test_defaults():
    cfg = load_config(None)
    assert cfg.focal_px is None
    assert cfg.calibration.epsilon == 1e-6 and cfg.calibration.max_iterations == 100
    assert (cfg.thresholds.alarm_deg, cfg.thresholds.max_deg) == (10.0, 20.0)


def test_full_config():
    cfg = parse_config(
        {
            "intrinsics": {"focal_length_mm": 4.8, "sensor_diagonal_mm": 6.43, "image_width": 1920, "image_height": 1080},
            "calibration": {"epsilon": 1e-7, "max_iterations": 50, "initial_beta_deg": 2, "clamp_infeasible": True},
            "thresholds": {"alarm_deg": 8, "max_deg": 15},
            "reference": {"phi_fit_fraction": 0.5},
        }
    )
    assert cfg.focal_px == pytest.approx(4.8 * math.hypot(1920, 1080) / 6.43)
    assert cfg.calibration.initial_beta == pytest.approx(math.radians(2))
    assert cfg.calibration.clamp_infeasible
    assert cfg.thresholds.alarm == pytest.approx(math.radians(8))
    assert cfg.reference.phi_fit_fraction == 0.5


def test_h_px_direct():
    assert parse_config({"intrinsics": {"h_px": 1600}}).focal_px == 1600.0


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": {}},
        {"thresholds": {"alarm_deg": 10, "colour": 1}},
        {"thresholds": {"alarm_deg": 30}},
        {"reference": {"phi_fit_fraction": 0}},
        {"calibration": []},
    ],
)
def test_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_file_errors(tmp_path):
    with pytest.raises(LoadFailureError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.json")
