"""Monte Carlo harness: synthetic swing observations and replicated calibration studies.

Every replication draws from its own Philox stream keyed by
``(seed, grid index, replication index)``, so results do not depend on
execution order or the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .calibration import CalibrationConfig, calibrate
from .errors import ConfigError, CraneSwingError
from .geometry import ImagePoint, SwingState, cos_viewing_angle, project_state
from .ingestion import Dataset, DetectionRecord

logger = logging.getLogger(__name__)

DEFAULT_ROPE_RANGE = (10.0, 30.0)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``seed`` and a spawn key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Sample:
    m: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    rope_length: np.ndarray | None = None
    resampled: int = 0

    def __len__(self) -> int:
        return self.m.size

    @property
    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        return self.m, self.theta


def draw_sample(
    beta: float,
    sigma: float,
    h: float,
    n: int,
    rng: np.random.Generator,
    rope_range: tuple[float, float] | None = None,
) -> Sample:
    """Draw ``n`` latent swings (folded normal angle, uniform azimuth) and project them.

    Draws that would land at or behind the image plane are redrawn and counted.
    """
    if not sigma > 0:
        raise ConfigError("sigma must be positive", sigma=sigma)
    if n < 1:
        raise ConfigError("n must be at least 1", n=n)
    alpha = np.abs(rng.normal(0.0, sigma, size=n))
    gamma = rng.uniform(0.0, 2.0 * np.pi, size=n)
    resampled = 0
    while True:
        bad = (alpha >= np.pi / 2) | (np.asarray(cos_viewing_angle(alpha, beta, gamma)) <= 0)
        k = int(bad.sum())
        if k == 0:
            break
        resampled += k
        alpha[bad] = np.abs(rng.normal(0.0, sigma, size=k))
        gamma[bad] = rng.uniform(0.0, 2.0 * np.pi, size=k)
    if resampled:
        logger.info("redrew %d out-of-view swing states", resampled)
    m, theta = project_state(alpha, beta, gamma, h)
    rope = rng.uniform(*rope_range, size=n) if rope_range is not None else None
    return Sample(np.atleast_1d(m), np.atleast_1d(theta), alpha, gamma, rope, resampled)


def draw_observation(beta: float, sigma: float, h: float, rng: np.random.Generator) -> tuple[ImagePoint, SwingState]:
    s = draw_sample(beta, sigma, h, 1, rng, rope_range=DEFAULT_ROPE_RANGE)
    point = ImagePoint(float(s.m[0]), float(s.theta[0]))
    state = SwingState(float(s.alpha[0]), float(s.gamma[0]), float(s.rope_length[0]))
    return point, state


def grab_scene(alpha, beta, gamma, rope_length, grab_width, h, orientation: str = "level"):
    """Project a bucket grab of known width through the tilted pinhole camera.

    The grab centre hangs at the rope end; its width runs along the swing
    direction, either level (``"level"``) or square to the rope
    (``"rope_normal"``).  Returns ``(m, theta, x)``: the centre's polar image
    coordinates and the pixel length of the projected width.
    """
    alpha, beta, gamma, l, b, h = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (alpha, beta, gamma, rope_length, grab_width, h))
    )
    sa, ca, sb, cb, sg, cg = np.sin(alpha), np.cos(alpha), np.sin(beta), np.cos(beta), np.sin(gamma), np.cos(gamma)
    # z along gravity; the principal axis tilts towards +x
    axis = np.stack([sb, np.zeros_like(sb), cb], axis=-1)
    ref = np.stack([-cb, np.zeros_like(cb), sb], axis=-1)  # image direction towards the gravity axis
    side = np.stack([np.zeros_like(sb), np.ones_like(sb), np.zeros_like(sb)], axis=-1)
    centre = l[..., None] * np.stack([sa * cg, sa * sg, ca], axis=-1)
    if orientation == "level":
        width_dir = np.stack([cg, sg, np.zeros_like(cg)], axis=-1)
    elif orientation == "rope_normal":
        width_dir = np.stack([ca * cg, ca * sg, -sa], axis=-1)
    else:
        raise ConfigError("orientation must be 'level' or 'rope_normal'", orientation=orientation)

    def to_plane(p):
        depth = np.sum(p * axis, axis=-1)
        if np.any(depth <= 0):
            raise ConfigError("scene point behind the camera")
        q = h[..., None] * p / depth[..., None] - h[..., None] * axis
        return np.sum(q * ref, axis=-1), np.sum(q * side, axis=-1)

    u, v = to_plane(centre)
    tu, tv = to_plane(centre - 0.5 * b[..., None] * width_dir)
    bu, bv = to_plane(centre + 0.5 * b[..., None] * width_dir)
    m = np.hypot(u, v)
    theta = np.where(m == 0, 0.0, np.arctan2(v, u))
    x = np.hypot(tu - bu, tv - bv)
    return m, theta, x


def sample_records(
    sample: Sample,
    image_width: int,
    image_height: int,
    phi: float = 0.0,
    fps: float | None = None,
) -> Dataset:
    """Synthetic detection dataset: image points placed around the image centre."""
    px, py = image_width / 2.0, image_height / 2.0
    cx = px + sample.m * np.cos(sample.theta + phi)
    cy = py + sample.m * np.sin(sample.theta + phi)
    rope = sample.rope_length
    records = tuple(
        DetectionRecord(
            frame_id=i,
            center_x=float(cx[i]),
            center_y=float(cy[i]),
            timestamp=None if fps is None else f"{i / fps:.6f}",
            rope_length_m=None if rope is None else float(rope[i]),
        )
        for i in range(len(sample))
    )
    return Dataset(records, int(image_width), int(image_height), source={"synthetic": True})


@dataclass(frozen=True)
class SimulationConfig:
    h: float = 1600.0
    beta_true: float = math.radians(5.0)
    sigma_true: float = math.radians(2.0)
    n: int = 10_000
    M: int = 100
    seed: int = 2024
    n_grid: tuple[int, ...] | None = None
    epsilon: float = 1e-6
    max_iterations: int = 100
    initial_beta: float = 0.0

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ConfigError("h must be positive", h=self.h)
        if not self.sigma_true > 0:
            raise ConfigError("sigma_true must be positive", sigma_true=self.sigma_true)
        if not 0 <= self.beta_true < math.pi / 2:
            raise ConfigError("beta_true must lie in [0, pi/2)", beta_true=self.beta_true)
        if self.n < 1 or self.M < 1:
            raise ConfigError("n and M must be at least 1", n=self.n, M=self.M)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", seed=self.seed)
        if self.n_grid is not None:
            grid = tuple(int(v) for v in self.n_grid)
            if not grid or min(grid) < 1:
                raise ConfigError("n_grid entries must be at least 1", n_grid=self.n_grid)
            object.__setattr__(self, "n_grid", grid)

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.n_grid if self.n_grid else (self.n,)

    @property
    def calibration(self) -> CalibrationConfig:
        return CalibrationConfig(self.epsilon, self.max_iterations, self.initial_beta)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimulationConfig":
        """Build from a config mapping with angles in degrees."""
        known = {"h", "beta_deg", "sigma_deg", "n", "M", "seed", "n_grid", "epsilon", "max_iterations", "initial_beta_deg"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError("unknown simulation config keys", keys=sorted(unknown))
        kw: dict[str, Any] = {}
        for key in ("h", "epsilon"):
            if key in d:
                kw[key] = float(d[key])
        for key in ("n", "M", "seed", "max_iterations"):
            if key in d:
                kw[key] = int(d[key])
        if "beta_deg" in d:
            kw["beta_true"] = math.radians(float(d["beta_deg"]))
        if "sigma_deg" in d:
            kw["sigma_true"] = math.radians(float(d["sigma_deg"]))
        if "initial_beta_deg" in d:
            kw["initial_beta"] = math.radians(float(d["initial_beta_deg"]))
        if d.get("n_grid"):
            kw["n_grid"] = tuple(int(v) for v in d["n_grid"])
        return cls(**kw)


@dataclass
class ReplicationResult:
    n: int
    replication: int
    beta_hat: float = float("nan")
    sigma_sq_hat: float = float("nan")
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    beta_trace_err: list[float] = field(default_factory=list)
    sigma_trace_err: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_replication(cfg: SimulationConfig, grid_index: int, replication: int) -> ReplicationResult:
    n = cfg.sizes[grid_index]
    rng = make_rng(cfg.seed, grid_index, replication)
    out = ReplicationResult(n=n, replication=replication)
    t0 = time.perf_counter()
    try:
        sample = draw_sample(cfg.beta_true, cfg.sigma_true, cfg.h, n, rng)
        rep = calibrate(sample.observations, cfg.h, cfg.calibration)
    except CraneSwingError as exc:
        out.wall_time = time.perf_counter() - t0
        out.error = f"{exc.code}: {exc.message}"
        return out
    out.wall_time = time.perf_counter() - t0
    be, se = rep.convergence_errors()
    out.beta_hat = rep.params.beta
    out.sigma_sq_hat = rep.params.sigma_sq
    out.iterations = rep.iterations
    out.converged = rep.converged
    out.beta_trace_err = [float(v) for v in be]
    out.sigma_trace_err = [float(v) for v in se]
    return out


def _run_task(args: tuple[SimulationConfig, int, int]) -> ReplicationResult:
    return run_replication(*args)


def _quantiles(values: np.ndarray) -> dict[str, float]:
    if values.size == 0:
        return {k: float("nan") for k in ("min", "q1", "median", "q3", "max")}
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))


@dataclass
class ReplicationReport:
    config: SimulationConfig
    results: list[ReplicationResult]

    def for_size(self, n: int) -> list[ReplicationResult]:
        return [r for r in self.results if r.n == n]

    def beta_errors(self, n: int) -> np.ndarray:
        ok = [r for r in self.for_size(n) if not r.failed]
        return np.abs(np.array([r.beta_hat for r in ok]) - self.config.beta_true)

    def sigma_errors(self, n: int) -> np.ndarray:
        ok = [r for r in self.for_size(n) if not r.failed]
        return np.abs(np.array([r.sigma_sq_hat for r in ok]) / self.config.sigma_true**2 - 1.0)

    def summary(self) -> dict[str, Any]:
        per_size = {}
        for n in self.config.sizes:
            rows = self.for_size(n)
            ok = [r for r in rows if not r.failed]
            per_size[str(n)] = {
                "replications": len(rows),
                "failed": len(rows) - len(ok),
                "converged": sum(r.converged for r in ok),
                "max_iterations": max((r.iterations for r in ok), default=0),
                "beta_abs_error": _quantiles(self.beta_errors(n)),
                "sigma_sq_rel_error": _quantiles(self.sigma_errors(n)),
            }
        cfg = asdict(self.config)
        cfg["beta_deg"] = math.degrees(self.config.beta_true)
        cfg["sigma_deg"] = math.degrees(self.config.sigma_true)
        return {"config": cfg, "sizes": per_size}

    def convergence_matrix(self, n: int, which: str = "beta") -> list[list[float]]:
        """Rows are replications, columns iterations ``t = 0..T_max`` (NaN past a run's end)."""
        rows = [r for r in self.for_size(n) if not r.failed]
        traces = [r.beta_trace_err if which == "beta" else r.sigma_trace_err for r in rows]
        width = max((len(t) for t in traces), default=0)
        return [t + [float("nan")] * (width - len(t)) for t in traces]


def run_study(cfg: SimulationConfig, workers: int = 1) -> ReplicationReport:
    tasks = [(cfg, gi, rep) for gi in range(len(cfg.sizes)) for rep in range(cfg.M)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    failed = sum(r.failed for r in results)
    if failed:
        logger.warning("%d of %d replications failed", failed, len(results))
    return ReplicationReport(cfg, results)


def validation_scenes(
    alphas_deg: Sequence[float],
    rope_lengths: Sequence[float],
    grab_width: float = 2.9,
    h: float = 1600.0,
    gamma: float = 0.0,
    orientation: str = "rope_normal",
) -> dict[str, np.ndarray]:
    """Grid of synthetic scenes with an ideally mounted camera (``beta = 0``)."""
    a, l = np.meshgrid(np.radians(np.asarray(alphas_deg, dtype=float)), np.asarray(rope_lengths, dtype=float))
    a, l = a.ravel(), l.ravel()
    m, theta, x = grab_scene(a, 0.0, gamma, l, grab_width, h, orientation)
    return {"alpha": a, "rope_length": l, "m": m, "theta": theta, "x": x}
