"""Polar image coordinates around the principal point.

The zero-angle reference line is not observable, so it is fitted: its
direction is chosen so the median of the detections' angles relative to it is
zero, i.e. a circular median of the raw detection bearings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError
from .geometry import ImagePoint, wrap_angle

MIN_FIT_RADIUS_PX = 1.0
MIN_FIT_POINTS = 3


@dataclass(frozen=True)
class ReferenceFrame:
    principal_x: float
    principal_y: float
    reference_angle_phi: float = 0.0
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        phi = float(wrap_angle(self.reference_angle_phi))
        object.__setattr__(self, "reference_angle_phi", phi)

    @classmethod
    def centered(cls, image_width: float, image_height: float, phi: float = 0.0) -> "ReferenceFrame":
        return cls(image_width / 2.0, image_height / 2.0, phi)

    def to_dict(self) -> dict[str, Any]:
        return {
            "principal_x": self.principal_x,
            "principal_y": self.principal_y,
            "reference_angle_phi_rad": self.reference_angle_phi,
            **{k: v for k, v in self.diagnostics.items()},
        }


def _xy(detections) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(detections, tuple) and len(detections) == 2 and np.ndim(detections[0]) == 1:
        return np.asarray(detections[0], dtype=float), np.asarray(detections[1], dtype=float)
    dets = list(detections)
    x = np.fromiter((d.center_x for d in dets), dtype=float, count=len(dets))
    y = np.fromiter((d.center_y for d in dets), dtype=float, count=len(dets))
    return x, y


def lower_median(values: np.ndarray) -> float:
    """Median taking the lower middle element for even counts."""
    s = np.sort(np.asarray(values, dtype=float))
    return float(s[(s.size - 1) // 2])


class _CircularSample:
    """Sorted bearings unrolled over three turns for O(log n) window queries."""

    def __init__(self, angles: np.ndarray) -> None:
        a = np.sort(np.asarray(wrap_angle(angles), dtype=float).reshape(-1))
        self.n = a.size
        self.ext = np.concatenate([a - 2 * np.pi, a, a + 2 * np.pi])
        self.csum = np.concatenate([[0.0], np.cumsum(self.ext)])
        self.k = (self.n + 1) // 2  # rank of the lower median, 1-based

    def median_residual(self, phi: np.ndarray) -> np.ndarray:
        # residuals live in (phi - pi, phi + pi]; the window starts after phi - pi
        start = np.searchsorted(self.ext, phi - np.pi, side="right")
        return self.ext[start + self.k - 1] - phi

    def mean_abs_deviation(self, phi: np.ndarray) -> np.ndarray:
        lo = np.searchsorted(self.ext, phi - np.pi, side="right")
        mid = np.searchsorted(self.ext, phi, side="right")
        hi = lo + self.n
        below = (mid - lo) * phi - (self.csum[mid] - self.csum[lo])
        above = (self.csum[hi] - self.csum[mid]) - (hi - mid) * phi
        return (below + above) / self.n


def circular_median(angles, tol: float = 1e-12) -> tuple[float, float]:
    """Direction ``phi`` making the lower median of ``wrap(angles - phi)`` zero.

    Candidates are the sample bearings (exact for finite samples) plus one
    corrective shift from each.  Among those achieving the smallest absolute
    residual median, the one with least mean circular deviation wins, then the
    smaller ``phi``.  Returns ``(phi, residual_median)``.
    """
    sample = _CircularSample(np.asarray(angles, dtype=float))
    if sample.n == 0:
        raise InsufficientDataError("no angles to take a median of")
    base = sample.ext[sample.n : 2 * sample.n]
    shifted = np.asarray(wrap_angle(base + sample.median_residual(base)), dtype=float).reshape(-1)
    cand = np.unique(np.concatenate([base, shifted]))
    med = np.abs(sample.median_residual(cand))
    best = med.min()
    pool = cand[med <= best + tol]
    dev = sample.mean_abs_deviation(pool)
    pool = pool[dev <= dev.min() + tol]
    phi = float(pool.min())
    return phi, float(sample.median_residual(np.array([phi]))[0])


def raw_angles(x, y, principal: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    dx = np.asarray(x, dtype=float) - principal[0]
    dy = np.asarray(y, dtype=float) - principal[1]
    return np.hypot(dx, dy), np.arctan2(dy, dx)


def fit_reference_angle(detections, principal: tuple[float, float]) -> ReferenceFrame:
    """Fit the zero-angle reference line through ``principal``.

    ``detections`` is a sequence of objects with ``center_x``/``center_y`` or a
    pair of coordinate arrays.  Points within one pixel of the principal point
    are ignored for the fit.
    """
    x, y = _xy(detections)
    if x.size < MIN_FIT_POINTS:
        raise InsufficientDataError("need at least 3 detections to fit the reference line", count=int(x.size))
    m, ang = raw_angles(x, y, principal)
    usable = m >= MIN_FIT_RADIUS_PX
    if not np.any(usable):
        raise DegenerateDataError("all detections sit on the principal point")
    if usable.sum() < MIN_FIT_POINTS:
        raise InsufficientDataError(
            "need at least 3 detections away from the principal point", count=int(usable.sum())
        )
    phi, resid = circular_median(ang[usable])
    theta = np.asarray(wrap_angle(ang[usable] - phi))
    return ReferenceFrame(
        float(principal[0]),
        float(principal[1]),
        phi,
        diagnostics={
            "fit_points": int(usable.sum()),
            "excluded_near_center": int((~usable).sum()),
            "residual_median_rad": lower_median(theta),
            "median_search_residual_rad": resid,
        },
    )


def to_image_points(x, y, rf: ReferenceFrame) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised conversion of pixel centres to ``(m, theta)`` arrays."""
    m, ang = raw_angles(x, y, (rf.principal_x, rf.principal_y))
    theta = np.asarray(wrap_angle(ang - rf.reference_angle_phi), dtype=float)
    theta = np.where(m == 0, 0.0, theta)
    return m, theta


def to_image_point(d, rf: ReferenceFrame) -> ImagePoint:
    m, theta = to_image_points(np.array([d.center_x]), np.array([d.center_y]), rf)
    return ImagePoint(float(m[0]), float(theta[0]))


def dataset_image_points(detections: Sequence, rf: ReferenceFrame) -> tuple[np.ndarray, np.ndarray]:
    x, y = _xy(detections)
    return to_image_points(x, y, rf)
