"""Exact trigonometry of the fly-jib camera model.

Frame of reference: ``O`` is the fly-jib head where both the rope and the
camera are attached, ``OG`` points along gravity, the camera principal axis
``OC`` is tilted by the camera angle ``beta`` away from gravity, and the rope
``OA`` makes the swing angle ``alpha`` with gravity.  ``gamma`` is the ground
plane azimuth between ``GA`` and ``GC``.  The image plane sits at focal
distance ``h`` (pixels) along the principal axis; the payload projects to a
point at distance ``m`` from the principal point and at angle ``theta`` from
the reference line through the projection of the gravity axis.

All angles are radians.  Functions accept scalars or numpy arrays and
broadcast like ufuncs; scalar inputs give Python floats back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    InconsistentGeometryError,
    InvalidIntrinsicsError,
    InvalidValidationInputError,
    OutOfViewError,
    UndefinedThetaError,
)

# arccos/arcsin arguments this far outside [-1, 1] are treated as rounding
CLIP_SLACK = 1e-9


def _out(x):
    """Return a Python float for 0-d results, the array otherwise."""
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def wrap_angle(x):
    """Map angles onto (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    w = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return _out(w)


def _clip_unit(value, what: str):
    v = np.asarray(value, dtype=float)
    bad = np.abs(v) > 1.0 + CLIP_SLACK
    if np.any(bad):
        worst = float(np.max(np.abs(v)))
        raise InconsistentGeometryError(
            f"{what} argument outside [-1, 1] beyond rounding slack",
            value=worst,
        )
    return np.clip(v, -1.0, 1.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Lens and sensor description used to express the focal length in pixels."""

    focal_length_mm: float
    sensor_diagonal_mm: float
    image_width_px: int
    image_height_px: int

    def __post_init__(self) -> None:
        for name in ("focal_length_mm", "sensor_diagonal_mm", "image_width_px", "image_height_px"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidIntrinsicsError(f"{name} must be a positive number", field=name, value=value)

    @property
    def pixels_per_mm(self) -> float:
        return math.hypot(self.image_width_px, self.image_height_px) / self.sensor_diagonal_mm

    @property
    def principal_point(self) -> tuple[float, float]:
        return self.image_width_px / 2.0, self.image_height_px / 2.0


@dataclass(frozen=True)
class SwingState:
    alpha: float
    gamma: float
    rope_length: float

    def __post_init__(self) -> None:
        if not self.rope_length > 0:
            raise DomainError("rope_length must be positive", value=self.rope_length)
        if not self.alpha >= 0:
            raise DomainError("alpha must be non-negative", value=self.alpha)


@dataclass(frozen=True)
class ImagePoint:
    """Polar image-plane coordinates relative to the principal point.

    Estimates depend on ``theta`` only through ``cos(theta)``; the sign is kept
    for diagnostics.
    """

    m: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not self.m >= 0:
            raise DomainError("m must be non-negative", value=self.m)
        if self.m == 0 and self.theta != 0:
            object.__setattr__(self, "theta", 0.0)


@dataclass(frozen=True)
class ValidationInput:
    m: float
    x: float
    b: float
    l: float


def focal_length_px(intr: CameraIntrinsics) -> float:
    """Focal length in pixel units: millimetres times the sensor pixel density."""
    if not isinstance(intr, CameraIntrinsics):
        raise InvalidIntrinsicsError("expected CameraIntrinsics")
    return intr.focal_length_mm * intr.pixels_per_mm


def cos_viewing_angle(alpha, beta, gamma):
    """Cosine of the angle between the rope and the principal axis."""
    alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (alpha, beta, gamma))
    return _out(np.cos(alpha) * np.cos(beta) + np.sin(alpha) * np.sin(beta) * np.cos(gamma))


def _sin_viewing_angle(alpha, beta, gamma):
    # norm of (rope unit vector) x (principal-axis unit vector); avoids 1 - cos^2
    sa, ca = np.sin(alpha), np.cos(alpha)
    sb, cb = np.sin(beta), np.cos(beta)
    sg, cg = np.sin(gamma), np.cos(gamma)
    x = sa * sg * cb
    y = ca * sb - sa * cg * cb
    z = sa * sg * sb
    return np.sqrt(x * x + y * y + z * z)


def project_m(alpha, beta, gamma, h):
    """Image distance of the payload from the principal point.

    Solves ``(m**2 + h**2) * cos(AOC)**2 == h**2`` for ``m >= 0``.
    """
    alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (alpha, beta, gamma))
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise InvalidIntrinsicsError("focal length h must be positive")
    c = np.asarray(cos_viewing_angle(alpha, beta, gamma))
    if np.any(c <= 0):
        raise OutOfViewError("payload at or behind the image plane", min_cos=float(np.min(c)))
    return _out(h * _sin_viewing_angle(alpha, beta, gamma) / c)


def theta_from_state(alpha, beta, m, h):
    """cos(theta) implied by a known swing angle and observed distance ``m``."""
    alpha, beta, m, h = (np.asarray(v, dtype=float) for v in (alpha, beta, m, h))
    if np.any(h <= 0):
        raise InvalidIntrinsicsError("focal length h must be positive")
    if np.any(m <= 0) or np.any(np.sin(beta) <= 0):
        raise UndefinedThetaError("theta is undefined when m == 0 or beta == 0")
    r = np.hypot(m, h)
    cos_theta = (np.cos(alpha) * r - h * np.cos(beta)) / (m * np.sin(beta))
    return _out(_clip_unit(cos_theta, "cos(theta)"))


def estimate_alpha(m, theta, beta, h):
    """Swing angle from one image measurement and the camera angle.

    Evaluates ``arccos((m sin(beta) cos(theta) + h cos(beta)) / sqrt(m**2 + h**2))``
    in its equivalent two-argument arctangent form, which keeps full precision
    for small angles.  At ``m == 0`` the result is ``beta`` exactly.
    """
    m, theta, beta, h = (np.asarray(v, dtype=float) for v in (m, theta, beta, h))
    if np.any(h <= 0):
        raise InvalidIntrinsicsError("focal length h must be positive")
    if np.any(m < 0):
        raise DomainError("m must be non-negative")
    sb, cb = np.sin(beta), np.cos(beta)
    st, ct = np.sin(theta), np.cos(theta)
    adj = m * sb * ct + h * cb
    r = np.hypot(m, h)
    _clip_unit(adj / r, "cos(alpha)")
    opp = np.hypot(m * st, h * sb - m * ct * cb)
    alpha = np.arctan2(opp, adj)
    alpha = np.where(m == 0, np.broadcast_to(beta, alpha.shape), alpha)
    return _out(alpha)


def validation_alpha(m, x=None, b=None, l=None):
    """Width-based swing angle ``arcsin(m b / (x l))``; needs no focal length.

    Accepts a :class:`ValidationInput` as the single argument as well.
    """
    if isinstance(m, ValidationInput):
        m, x, b, l = m.m, m.x, m.b, m.l
    m, x, b, l = (np.asarray(v, dtype=float) for v in (m, x, b, l))
    for name, v in (("x", x), ("b", b), ("l", l)):
        if np.any(~(v > 0)):
            raise DomainError(f"{name} must be positive", field=name)
    if np.any(~(m >= 0)):
        raise DomainError("m must be non-negative", field="m")
    ratio = m * b / (x * l)
    if np.any(ratio > 1.0 + CLIP_SLACK):
        raise InvalidValidationInputError("m*b/(x*l) exceeds 1", value=float(np.max(ratio)))
    return _out(np.arcsin(np.clip(ratio, 0.0, 1.0)))


def project_state(alpha, beta, gamma, h):
    """Observable ``(m, theta)`` for latent swing states.

    ``theta`` is measured from the reference line towards the side of positive
    ``sin(gamma)``, and is computed from the in-plane components directly:
    ``cos(theta)`` equals :func:`theta_from_state` but stays exact where that
    closed form cancels (``theta`` near 0 or pi).  At ``m == 0`` theta is 0;
    at ``beta == 0`` it takes the limiting value ``pi - gamma`` (wrapped).
    """
    alpha, beta, gamma, h = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, beta, gamma, h)))
    m = np.asarray(project_m(alpha, beta, gamma, h), dtype=float)
    sa, ca = np.sin(alpha), np.cos(alpha)
    along = ca * np.sin(beta) - sa * np.cos(gamma) * np.cos(beta)
    across = sa * np.sin(gamma)
    theta = np.where(m == 0, 0.0, np.arctan2(across, along))
    return _out(m), _out(theta)
