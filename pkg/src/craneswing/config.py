"""JSON run configuration: intrinsics, calibration, thresholds and reference-line options.

Angles are degrees in config files and radians everywhere past this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .calibration import CalibrationConfig
from .errors import ConfigError, LoadFailureError
from .geometry import CameraIntrinsics, focal_length_px
from .monitor import Thresholds

_SECTIONS = {"intrinsics", "calibration", "thresholds", "reference"}


@dataclass(frozen=True)
class ReferenceOptions:
    principal_x: float | None = None
    principal_y: float | None = None
    # share of frames (in frame order) used to fit the reference line
    phi_fit_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.phi_fit_fraction <= 1.0:
            raise ConfigError("phi_fit_fraction must lie in (0, 1]", phi_fit_fraction=self.phi_fit_fraction)


@dataclass(frozen=True)
class RunConfig:
    intrinsics: CameraIntrinsics | None = None
    h_px: float | None = None
    image_width: int | None = None
    image_height: int | None = None
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    reference: ReferenceOptions = field(default_factory=ReferenceOptions)

    @property
    def focal_px(self) -> float | None:
        if self.h_px is not None:
            return self.h_px
        if self.intrinsics is not None:
            return focal_length_px(self.intrinsics)
        return None


def _section(data: dict[str, Any], name: str, allowed: set[str]) -> dict[str, Any]:
    sec = data.get(name)
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}", keys=sorted(unknown))
    return sec


def parse_config(data: dict[str, Any]) -> RunConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError("unknown config sections", sections=sorted(unknown))
    intr = _section(
        data, "intrinsics", {"focal_length_mm", "sensor_diagonal_mm", "image_width", "image_height", "h_px"}
    )
    cal = _section(data, "calibration", {"epsilon", "max_iterations", "initial_beta_deg", "clamp_infeasible"})
    thr = _section(data, "thresholds", {"alarm_deg", "max_deg"})
    ref = _section(data, "reference", {"principal_x", "principal_y", "phi_fit_fraction"})

    intrinsics = None
    if "focal_length_mm" in intr or "sensor_diagonal_mm" in intr:
        try:
            intrinsics = CameraIntrinsics(
                intr["focal_length_mm"], intr["sensor_diagonal_mm"], intr["image_width"], intr["image_height"]
            )
        except KeyError as exc:
            raise ConfigError("intrinsics section is incomplete", missing=exc.args[0]) from None
    h_px = intr.get("h_px")
    if h_px is not None and not (isinstance(h_px, (int, float)) and h_px > 0):
        raise ConfigError("h_px must be positive", h_px=h_px)

    calibration = CalibrationConfig(
        epsilon=float(cal.get("epsilon", 1e-6)),
        max_iterations=int(cal.get("max_iterations", 100)),
        initial_beta=math.radians(float(cal.get("initial_beta_deg", 0.0))),
        clamp_infeasible=bool(cal.get("clamp_infeasible", False)),
    )
    thresholds = Thresholds(float(thr.get("alarm_deg", 10.0)), float(thr.get("max_deg", 20.0)))
    reference = ReferenceOptions(
        ref.get("principal_x"), ref.get("principal_y"), float(ref.get("phi_fit_fraction", 1.0))
    )
    return RunConfig(
        intrinsics=intrinsics,
        h_px=None if h_px is None else float(h_px),
        image_width=intr.get("image_width"),
        image_height=intr.get("image_height"),
        calibration=calibration,
        thresholds=thresholds,
        reference=reference,
    )


def read_json(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadFailureError("cannot read config file", path=str(path), reason=str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config file is not valid JSON", path=str(path), reason=str(exc)) from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object", path=str(path))
    return data


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(read_json(path))
