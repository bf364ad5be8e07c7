"""Synthetic cluttered sequences with a moving point target and noise.

The background is a rigid, analytically translating sum of random low-
frequency cosine components over a DC pedestal; the generator evaluates the
continuous model per frame (never shifts pixels), so translation is exact.
A Gaussian-blurred point target *replaces* the background where its
intensity clears the truncation threshold, and white Gaussian noise is
added last.

RNG draw order is fixed and recorded: per component ``fx, fy, phase``, then
per-pixel noise row-major in frame order.  The component table persisted in
:class:`GroundTruth` (not the generator) is the reproduction contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

__all__ = ["SimConfig", "GroundTruth", "generate", "inject_target", "add_noise"]


@dataclass(frozen=True)
class SimConfig:
    """Scene parameters; defaults reproduce the reference simulation:
    64x64 frames, clutter drifting at (1.625, 0.625) px/frame built from 25
    cosine components (|f| <= 2/9 cy/px, amplitude 0.1) over a 10.0 DC
    pedestal, a unit-peak target moving at (-0.625, -0.375) px/frame that
    reaches image center in the final frame, and noise sigma 0.1."""

    width: int = 64
    height: int = 64
    frame_count: int = 100
    clutter_velocity: tuple[float, float] = (1.625, 0.625)
    component_count: int = 25
    component_amplitude: float = 0.1
    freq_range: float = 2.0 / 9.0
    dc_offset: float = 10.0
    target_velocity: tuple[float, float] = (-0.625, -0.375)
    target_peak: float | None = 1.0
    psf_sigma: float = 1.0
    target_truncation: float = 0.1
    noise_sigma: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.frame_count < 5:
            raise ValueError("frame_count must cover the temporal window (>= 5)")
        if self.component_count < 0:
            raise ValueError("component_count must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.target_peak is not None and self.target_peak <= self.target_truncation:
            raise ValueError("target peak must exceed the truncation threshold")
        if self.psf_sigma <= 0:
            raise ValueError("psf_sigma must be positive")


@dataclass
class GroundTruth:
    """Everything needed to reproduce and score a generated sequence."""

    config: SimConfig
    seed: int
    components: np.ndarray  # (N, 4): fx, fy, phase, amplitude
    clutter_velocity: tuple[float, float]
    target_centers: np.ndarray | None  # (T, 2): (cx, cy) per frame

    def to_json_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["clutter_velocity"] = list(self.config.clutter_velocity)
        cfg["target_velocity"] = list(self.config.target_velocity)
        return {
            "config": cfg,
            "seed": self.seed,
            "components": self.components.tolist(),
            "clutter_velocity": list(self.clutter_velocity),
            "target_centers": (
                None if self.target_centers is None else self.target_centers.tolist()
            ),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "GroundTruth":
        cfg = dict(data["config"])
        cfg["clutter_velocity"] = tuple(cfg["clutter_velocity"])
        cfg["target_velocity"] = tuple(cfg["target_velocity"])
        centers = data.get("target_centers")
        return cls(
            config=SimConfig(**cfg),
            seed=data["seed"],
            components=np.asarray(data["components"], dtype=np.float64).reshape(-1, 4),
            clutter_velocity=tuple(data["clutter_velocity"]),
            target_centers=None if centers is None else np.asarray(centers, dtype=np.float64),
        )


def inject_target(frame, center, peak, sigma, truncation):
    """Composite a Gaussian point target into ``frame`` in place.

    The target obscures the background: wherever
    ``peak * exp(-r^2 / (2 sigma^2)) >= truncation`` the pixel is replaced
    by the target intensity; elsewhere the frame is untouched.  Returns the
    frame for convenience.
    """
    if peak <= truncation:
        raise ValueError("peak must exceed truncation")
    cx, cy = float(center[0]), float(center[1])
    h, w = frame.shape
    # bounding box of the truncation disk
    radius = sigma * math.sqrt(2.0 * math.log(peak / truncation))
    x0 = max(0, int(math.floor(cx - radius)))
    x1 = min(w - 1, int(math.ceil(cx + radius)))
    y0 = max(0, int(math.floor(cy - radius)))
    y1 = min(h - 1, int(math.ceil(cy + radius)))
    if x0 > x1 or y0 > y1:
        return frame
    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    r2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
    blob = peak * np.exp(-r2 / (2.0 * sigma * sigma))
    patch = frame[y0 : y1 + 1, x0 : x1 + 1]
    keep = blob >= truncation
    patch[keep] = blob[keep].astype(patch.dtype)
    return frame


def add_noise(frame, sigma, rng):
    """Add zero-mean Gaussian noise in place, consuming ``rng`` row-major."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return frame
    frame += rng.normal(0.0, sigma, size=frame.shape)
    return frame


def target_center(config: SimConfig, t: int) -> tuple[float, float]:
    """Target center at frame t; the final frame lands on the image center."""
    vx, vy = config.target_velocity
    last = config.frame_count - 1
    return (
        config.width / 2.0 + vx * (t - last),
        config.height / 2.0 + vy * (t - last),
    )


def generate(config: SimConfig):
    """Produce the frame sequence and its ground truth.

    Returns ``(frames, truth)`` with frames shaped (T, H, W) float32.
    Deterministic for a fixed config: same seed, same bits.
    """
    config.validate()
    rng = np.random.default_rng(config.rng_seed)

    comps = np.zeros((config.component_count, 4), dtype=np.float64)
    for i in range(config.component_count):
        comps[i, 0] = rng.uniform(-config.freq_range, config.freq_range)
        comps[i, 1] = rng.uniform(-config.freq_range, config.freq_range)
        comps[i, 2] = rng.uniform(0.0, 2.0 * math.pi)
        comps[i, 3] = config.component_amplitude

    xs = np.arange(config.width, dtype=np.float64)[None, :]
    ys = np.arange(config.height, dtype=np.float64)[:, None]
    vx, vy = config.clutter_velocity

    with_target = config.target_peak is not None
    centers = None
    if with_target:
        centers = np.array(
            [target_center(config, t) for t in range(config.frame_count)],
            dtype=np.float64,
        )

    frames = np.empty(
        (config.frame_count, config.height, config.width), dtype=np.float32
    )
    scratch = np.empty((config.height, config.width), dtype=np.float64)
    for t in range(config.frame_count):
        scratch[:] = config.dc_offset
        for fx, fy, phase, amp in comps:
            scratch += amp * np.cos(
                2.0 * math.pi * (fx * (xs - vx * t) + fy * (ys - vy * t)) + phase
            )
        if with_target:
            inject_target(
                scratch,
                centers[t],
                config.target_peak,
                config.psf_sigma,
                config.target_truncation,
            )
        if config.noise_sigma > 0:
            add_noise(scratch, config.noise_sigma, rng)
        frames[t] = scratch.astype(np.float32)

    truth = GroundTruth(
        config=config,
        seed=config.rng_seed,
        components=comps,
        clutter_velocity=config.clutter_velocity,
        target_centers=centers,
    )
    return frames, truth
