"""Per-frame swing estimates, alarm classification and the width-based cross-check."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, ConfigMismatchError, DomainError, LoadFailureError
from .geometry import CLIP_SLACK, estimate_alpha, validation_alpha
from .ingestion import Dataset
from .reference_frame import ReferenceFrame, dataset_image_points

NORMAL = "normal"
ALARM = "alarm"
OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class Thresholds:
    alarm_deg: float = 10.0
    max_deg: float = 20.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.alarm_deg <= self.max_deg):
            raise ConfigError("need 0 <= alarm_deg <= max_deg", alarm_deg=self.alarm_deg, max_deg=self.max_deg)

    @property
    def alarm(self) -> float:
        return math.radians(self.alarm_deg)

    @property
    def max(self) -> float:
        return math.radians(self.max_deg)


def classify(alpha, thresholds: Thresholds = Thresholds()) -> np.ndarray:
    """Status per angle (radians): normal, alarm above the danger level, out_of_range above the maximum."""
    a = np.asarray(alpha, dtype=float)
    status = np.full(a.shape, NORMAL, dtype=object)
    status[(a > thresholds.alarm) & (a <= thresholds.max)] = ALARM
    status[a > thresholds.max] = OUT_OF_RANGE
    return status


@dataclass(frozen=True)
class SwingEstimate:
    frame_id: int
    alpha: float
    m: float
    theta: float
    status: str


@dataclass(frozen=True)
class ValidationComparison:
    frame_id: int
    alpha_hat: float
    alpha_tilde: float

    @property
    def abs_diff(self) -> float:
        return abs(self.alpha_hat - self.alpha_tilde)


@dataclass(frozen=True)
class Params:
    """Calibrated installation: what ``calibrate`` writes and later commands read."""

    beta_rad: float
    sigma_sq_rad2: float
    h_px: float
    principal_x: float
    principal_y: float
    reference_angle_phi_rad: float
    dataset_fingerprint: str = ""
    image_width: int | None = None
    image_height: int | None = None

    @property
    def reference_frame(self) -> ReferenceFrame:
        return ReferenceFrame(self.principal_x, self.principal_y, self.reference_angle_phi_rad)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Params":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadFailureError("cannot read params file", path=str(path), reason=str(exc)) from exc
        if "params" in data and isinstance(data["params"], dict):
            data = data["params"]
        fields = cls.__dataclass_fields__
        try:
            return cls(**{k: v for k, v in data.items() if k in fields})
        except TypeError as exc:
            raise ConfigError("params file is missing fields", path=str(path), reason=str(exc)) from exc

    def check_dataset(self, ds: Dataset) -> None:
        if self.image_width is None or self.image_height is None:
            return
        if (ds.image_width, ds.image_height) != (self.image_width, self.image_height):
            raise ConfigMismatchError(
                "dataset image size differs from the calibrated camera",
                dataset=[ds.image_width, ds.image_height],
                params=[self.image_width, self.image_height],
            )


def estimate_frames(ds: Dataset, params: Params, thresholds: Thresholds = Thresholds()) -> list[SwingEstimate]:
    params.check_dataset(ds)
    m, theta = dataset_image_points(ds.records, params.reference_frame)
    if m.size == 0:
        return []
    alpha = np.atleast_1d(estimate_alpha(m, theta, params.beta_rad, params.h_px))
    status = classify(alpha, thresholds)
    ids = ds.frame_ids
    return [
        SwingEstimate(int(ids[i]), float(alpha[i]), float(m[i]), float(theta[i]), str(status[i]))
        for i in range(m.size)
    ]


def estimate_summary(estimates: Sequence[SwingEstimate], small_deg: float = 5.0) -> dict[str, Any]:
    alpha = np.array([e.alpha for e in estimates], dtype=float)
    counts = {s: sum(e.status == s for e in estimates) for s in (NORMAL, ALARM, OUT_OF_RANGE)}
    if alpha.size == 0:
        return {"frames": 0, "status_counts": counts}
    return {
        "frames": int(alpha.size),
        "fraction_at_most_5_deg": float(np.mean(alpha <= math.radians(small_deg))),
        "max_alpha_deg": math.degrees(float(alpha.max())),
        "max_alpha_frame": estimates[int(alpha.argmax())].frame_id,
        "median_alpha_deg": math.degrees(float(np.median(alpha))),
        "status_counts": counts,
    }


def moving_median(alpha: Sequence[float], window: int) -> np.ndarray:
    """Trailing median over the last ``window`` frames (causal; for noisy streams)."""
    a = np.asarray(alpha, dtype=float)
    if window <= 1 or a.size == 0:
        return a.copy()
    out = np.empty_like(a)
    for i in range(a.size):
        out[i] = np.median(a[max(0, i - window + 1) : i + 1])
    return out


def alarm_events(
    estimates: Iterable[SwingEstimate],
    thresholds: Thresholds = Thresholds(),
    per_frame_alarms: bool = False,
    smoothing_window: int = 1,
) -> Iterator[dict[str, Any]]:
    """Event stream: one FRAME per estimate, ALARM on leaving the normal band, SUMMARY last.

    By default an ALARM fires only on the transition out of ``normal`` (into
    ``alarm`` or ``out_of_range``); ``per_frame_alarms`` fires on every
    non-normal frame instead.
    """
    estimates = list(estimates)
    alpha = moving_median([e.alpha for e in estimates], smoothing_window)
    status = classify(alpha, thresholds)
    prev = NORMAL
    n_alarms = 0
    counts = {NORMAL: 0, ALARM: 0, OUT_OF_RANGE: 0}
    for est, a, st in zip(estimates, alpha, status):
        counts[st] += 1
        alpha_deg = math.degrees(float(a))
        yield {"type": "FRAME", "frame_id": est.frame_id, "alpha_deg": alpha_deg, "status": st}
        fire = st != NORMAL and (per_frame_alarms or prev == NORMAL)
        if fire:
            n_alarms += 1
            yield {
                "type": "ALARM",
                "frame_id": est.frame_id,
                "alpha_deg": alpha_deg,
                "status": st,
                "threshold_deg": thresholds.alarm_deg,
            }
        prev = st
    yield {"type": "SUMMARY", "frames": len(estimates), "alarms": n_alarms, "status_counts": counts}


def load_widths(path: str | Path) -> dict[int, float | None]:
    """``frame_id,x_px`` file; unparseable widths are kept as ``None`` so they can be reported."""
    path = Path(path)
    if not path.is_file():
        raise LoadFailureError("width observations file not found", path=str(path))
    out: dict[int, float | None] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame_id", "x_px"} <= set(reader.fieldnames):
            raise LoadFailureError("width file needs frame_id,x_px columns", path=str(path))
        for row in reader:
            try:
                fid = int(row["frame_id"])
            except (TypeError, ValueError):
                raise LoadFailureError("bad frame_id in width file", path=str(path), row=reader.line_num) from None
            try:
                out[fid] = float(row["x_px"])
            except (TypeError, ValueError):
                out[fid] = None
    return out


def compare_validation(
    ds: Dataset,
    params: Params,
    grab_width_m: float,
    widths: dict[int, float | None],
    frames: Iterable[int] | None = None,
) -> tuple[list[ValidationComparison], list[dict[str, Any]]]:
    """Pair the geometric estimate with the width-based one for each frame.

    Frames lacking a rope length or width, or outside the width estimator's
    domain, are skipped with a reason instead of failing the run.
    """
    if not grab_width_m > 0:
        raise DomainError("grab width must be positive", grab_width_m=grab_width_m)
    params.check_dataset(ds)
    by_id = {r.frame_id: r for r in ds.records}
    wanted = list(frames) if frames is not None else sorted(widths)
    estimates = {e.frame_id: e for e in estimate_frames(ds, params)}
    rows: list[ValidationComparison] = []
    skipped: list[dict[str, Any]] = []
    for fid in wanted:
        rec = by_id.get(fid)
        if rec is None:
            skipped.append({"frame_id": fid, "reason": "missing:frame"})
            continue
        if rec.rope_length_m is None:
            skipped.append({"frame_id": fid, "reason": "missing:rope_length"})
            continue
        x = widths.get(fid)
        if fid not in widths:
            skipped.append({"frame_id": fid, "reason": "missing:x"})
            continue
        if x is None or not math.isfinite(x) or x <= 0:
            skipped.append({"frame_id": fid, "reason": "domain:x"})
            continue
        est = estimates[fid]
        if est.m * grab_width_m / (x * rec.rope_length_m) > 1.0 + CLIP_SLACK:
            skipped.append({"frame_id": fid, "reason": "domain:arcsin"})
            continue
        tilde = validation_alpha(est.m, x, grab_width_m, rec.rope_length_m)
        rows.append(ValidationComparison(fid, est.alpha, tilde))
    return rows, skipped
