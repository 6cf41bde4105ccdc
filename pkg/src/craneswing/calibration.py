"""Iterative method-of-moments calibration of the camera angle and swing variance.

The swing angle is modelled as ``|Z|`` with ``Z ~ N(0, sigma_sq)`` and the
ground azimuth as uniform and independent of it.  Under that model

    E[h / sqrt(m**2 + h**2)] = cos(beta) * exp(-sigma_sq / 2)
    E[alpha**2] = sigma_sq

and the calibrator alternates between per-frame swing estimates at the current
camera angle, the second-moment estimate of ``sigma_sq``, and the moment
equation solved for ``beta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import CalibrationInfeasibleError, ConfigError, InsufficientDataError, InvalidIntrinsicsError
from .geometry import CLIP_SLACK, ImagePoint, estimate_alpha

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """Camera angle ``beta`` (rad) and swing variance ``sigma_sq`` (rad^2).

    ``sigma_sq == 0`` is representable because it is the fixed point for data
    sitting exactly on the principal point; reports flag it as degenerate.
    """

    beta: float
    sigma_sq: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta < math.pi / 2):
            raise ConfigError("beta must lie in [0, pi/2)", beta=self.beta)
        if not self.sigma_sq >= 0.0:
            raise ConfigError("sigma_sq must be non-negative", sigma_sq=self.sigma_sq)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)


@dataclass(frozen=True)
class CalibrationConfig:
    epsilon: float = 1e-6
    max_iterations: int = 100
    initial_beta: float = 0.0
    clamp_infeasible: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", epsilon=self.epsilon)
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError("max_iterations must be an integer >= 1", max_iterations=self.max_iterations)
        if not (0.0 <= self.initial_beta < math.pi / 2):
            raise ConfigError("initial_beta must lie in [0, pi/2)", initial_beta=self.initial_beta)


@dataclass
class CalibrationReport:
    params: ModelParams
    iterations: int
    # trace[t] = (beta^(t), sigma_sq^(t)); trace[0] holds the starting angle and
    # the variance of the first per-frame pass
    trace: list[tuple[float, float]]
    final_deltas: tuple[float, float]
    converged: bool
    alphas: np.ndarray = field(repr=False)
    clamped_steps: int = 0

    @property
    def degenerate(self) -> bool:
        return self.params.sigma_sq == 0.0

    @property
    def relative_sigma_delta(self) -> float:
        """``|sigma_sq^(T-1) / sigma_sq^(T) - 1|``, the ratio form of the last step."""
        if len(self.trace) < 2 or self.trace[-1][1] == 0.0:
            return float("nan")
        return abs(self.trace[-2][1] / self.trace[-1][1] - 1.0)

    def convergence_errors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-iteration distance to the final estimate.

        Returns ``|beta^(t) - beta_hat|`` and ``|sigma_sq^(t) / sigma_sq_hat - 1|``
        for ``t = 0..T``; both end in exactly zero.
        """
        tr = np.asarray(self.trace, dtype=float)
        beta_err = np.abs(tr[:, 0] - self.params.beta)
        if self.params.sigma_sq == 0.0:
            sigma_err = np.where(tr[:, 1] == 0.0, 0.0, np.inf)
        else:
            sigma_err = np.abs(tr[:, 1] / self.params.sigma_sq - 1.0)
        return beta_err, sigma_err

    def to_dict(self) -> dict[str, Any]:
        beta_err, sigma_err = self.convergence_errors()
        return {
            "beta_rad": self.params.beta,
            "sigma_sq_rad2": self.params.sigma_sq,
            "beta_deg": math.degrees(self.params.beta),
            "sigma_deg": math.degrees(self.params.sigma),
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "clamped_steps": self.clamped_steps,
            "final_abs_delta_beta": self.final_deltas[0],
            "final_abs_delta_sigma_sq": self.final_deltas[1],
            "final_rel_delta_sigma_sq": self.relative_sigma_delta,
            "trace": [
                {"t": t, "beta_rad": b, "sigma_sq_rad2": s, "beta_err": float(be), "sigma_sq_rel_err": float(se)}
                for t, ((b, s), be, se) in enumerate(zip(self.trace, beta_err, sigma_err))
            ],
        }


def _as_arrays(obs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obs, tuple) and len(obs) == 2 and not isinstance(obs[0], ImagePoint):
        m, theta = (np.asarray(v, dtype=float) for v in obs)
    else:
        obs = list(obs)
        m = np.fromiter((p.m for p in obs), dtype=float, count=len(obs))
        theta = np.fromiter((p.theta for p in obs), dtype=float, count=len(obs))
    if m.ndim != 1 or m.shape != theta.shape:
        raise InsufficientDataError("observations must be matching 1-d arrays of m and theta")
    if m.size == 0:
        raise InsufficientDataError("no observations to calibrate on")
    if np.any(~np.isfinite(m)) or np.any(~np.isfinite(theta)) or np.any(m < 0):
        raise InsufficientDataError("observations contain non-finite or negative values")
    return m, theta


class _Moments:
    """Per-dataset quantities reused by every iteration."""

    def __init__(self, m: np.ndarray, theta: np.ndarray, h: float) -> None:
        if not h > 0:
            raise InvalidIntrinsicsError("focal length h must be positive", h=h)
        self.m = m
        self.theta = theta
        self.h = float(h)
        self.mean_cos = float(np.mean(self.h / np.hypot(m, self.h)))

    def alphas(self, beta: float) -> np.ndarray:
        return np.asarray(estimate_alpha(self.m, self.theta, beta, self.h), dtype=float).reshape(self.m.shape)

    def beta_from_sigma_sq(self, sigma_sq: float, clamp: bool = False) -> tuple[float, bool]:
        arg = self.mean_cos * math.exp(sigma_sq / 2.0)
        if arg > 1.0 + CLIP_SLACK:
            if not clamp:
                raise CalibrationInfeasibleError(
                    "mean cosine inflated by exp(sigma_sq/2) exceeds 1; no real camera angle fits",
                    value=arg,
                    sigma_sq=sigma_sq,
                )
            logger.warning("infeasible camera-angle moment %.12g clamped to beta=0", arg)
            return 0.0, True
        return math.acos(min(arg, 1.0)), False


def iterate_once(obs, h: float, current, *, clamp_infeasible: bool = False) -> tuple[ModelParams, np.ndarray]:
    """One update: per-frame swing angles, then ``sigma_sq``, then ``beta``.

    ``current`` is a :class:`ModelParams` or a bare starting camera angle.
    Returns the new parameters and the swing angles computed at ``current``.
    """
    m, theta = _as_arrays(obs)
    beta = current.beta if isinstance(current, ModelParams) else float(current)
    mom = _Moments(m, theta, h)
    alphas = mom.alphas(beta)
    sigma_sq = float(np.mean(alphas**2))
    new_beta, _ = mom.beta_from_sigma_sq(sigma_sq, clamp=clamp_infeasible)
    return ModelParams(new_beta, sigma_sq), alphas


def calibrate(obs, h: float, cfg: CalibrationConfig | None = None) -> CalibrationReport:
    """Run the iteration until both parameter steps fall below ``cfg.epsilon``.

    Hitting ``cfg.max_iterations`` is reported through ``converged=False``,
    never raised.
    """
    cfg = cfg or CalibrationConfig()
    m, theta = _as_arrays(obs)
    mom = _Moments(m, theta, h)

    beta = float(cfg.initial_beta)
    alphas = mom.alphas(beta)
    sigma_sq = float(np.mean(alphas**2))
    trace = [(beta, sigma_sq)]
    clamped = 0
    converged = False
    d_beta = d_sigma = float("inf")

    for _ in range(int(cfg.max_iterations)):
        alphas = mom.alphas(beta)
        new_sigma_sq = float(np.mean(alphas**2))
        new_beta, was_clamped = mom.beta_from_sigma_sq(new_sigma_sq, clamp=cfg.clamp_infeasible)
        clamped += was_clamped
        d_beta = abs(new_beta - beta)
        d_sigma = abs(new_sigma_sq - sigma_sq)
        beta, sigma_sq = new_beta, new_sigma_sq
        trace.append((beta, sigma_sq))
        if d_beta < cfg.epsilon and d_sigma < cfg.epsilon:
            converged = True
            break

    if not converged:
        logger.warning("calibration stopped after %d iterations without converging", len(trace) - 1)
    params = ModelParams(beta, sigma_sq)
    if params.sigma_sq == 0.0:
        logger.warning("calibration collapsed to sigma_sq == 0; all frames sit on the principal axis")
    return CalibrationReport(
        params=params,
        iterations=len(trace) - 1,
        trace=trace,
        final_deltas=(d_beta, d_sigma),
        converged=converged,
        alphas=mom.alphas(beta),
        clamped_steps=clamped,
    )


def swing_angles(obs: Sequence[ImagePoint] | tuple, params: ModelParams, h: float) -> np.ndarray:
    """Per-frame swing angle estimates for fitted parameters."""
    m, theta = _as_arrays(obs)
    return _Moments(m, theta, h).alphas(params.beta)
