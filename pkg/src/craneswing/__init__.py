"""Crane payload swing-angle estimation from a single fly-jib camera."""

__version__ = "0.1.0"

from .calibration import CalibrationConfig, CalibrationReport, ModelParams, calibrate, iterate_once
from .geometry import (
    CameraIntrinsics,
    ImagePoint,
    SwingState,
    ValidationInput,
    cos_viewing_angle,
    estimate_alpha,
    focal_length_px,
    project_m,
    project_state,
    theta_from_state,
    validation_alpha,
)
from .ingestion import Dataset, DetectionRecord, join_rope_lengths, load_dataset, save_dataset
from .reference_frame import ReferenceFrame, fit_reference_angle, to_image_point
from .simulator import SimulationConfig, draw_observation, draw_sample, run_study

__all__ = [
    "CalibrationConfig",
    "CalibrationReport",
    "CameraIntrinsics",
    "Dataset",
    "DetectionRecord",
    "ImagePoint",
    "ModelParams",
    "ReferenceFrame",
    "SimulationConfig",
    "SwingState",
    "ValidationInput",
    "calibrate",
    "cos_viewing_angle",
    "draw_observation",
    "draw_sample",
    "estimate_alpha",
    "fit_reference_angle",
    "focal_length_px",
    "iterate_once",
    "join_rope_lengths",
    "load_dataset",
    "project_m",
    "project_state",
    "run_study",
    "save_dataset",
    "theta_from_state",
    "to_image_point",
    "validation_alpha",
]
