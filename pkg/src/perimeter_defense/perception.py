"""Intruder pose estimators.

Two estimators stand in for the pose network: a synthetic one that projects
the true intruder and corrupts the pixel/depth triple with Gaussian noise,
and a replay one that plays back a recorded detection log.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .camera import (
    REFERENCE_INTRINSICS,
    CameraIntrinsics,
    CameraPose,
    ImagePose,
    back_project,
    camera_to_world,
    in_fov,
    project,
    world_to_camera,
)
from .geometry import WorldPoint

MIN_DEPTH = 0.01
SOURCES = ("dynamic", "static")
LOG_HEADER = ("t", "u", "v", "y_c", "source")


@dataclass(frozen=True)
class NoiseModel:
    """Per-axis Gaussian noise on (u, v) in pixels and on y_c in length
    units, plus the probability of missing an in-view intruder."""

    sigma_uv: float = 6.25
    sigma_y: float = 0.46
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_uv < 0.0 or self.sigma_y < 0.0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ValueError("dropout_rate must lie in [0, 1]")


# errors of a well-trained pose network: pixels on (u, v), length units on y_c
DEFAULT_NOISE = NoiseModel(6.25, 0.46, 0.0)
NOISELESS = NoiseModel(0.0, 0.0, 0.0)
# sharper pixels, poorer depth: lateral error well below longitudinal error
CAMERA_REALISTIC_NOISE = NoiseModel(2.0, 0.6, 0.0)

NOISE_PRESETS = {
    "default": DEFAULT_NOISE,
    "none": NOISELESS,
    "camera_realistic": CAMERA_REALISTIC_NOISE,
}


@dataclass(frozen=True)
class Detection:
    pose: Optional[ImagePose]
    source: str = "dynamic"

    @property
    def present(self) -> bool:
        return self.pose is not None


class MalformedLogError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the algorithm is fixed so streams are reproducible."""
    return np.random.Generator(np.random.PCG64(seed))


def synthetic_estimate(
    truth,
    pose: CameraPose,
    k: CameraIntrinsics,
    nm: NoiseModel,
    rng: np.random.Generator,
    source: str = "dynamic",
) -> Detection:
    # always four draws per call so streams stay aligned across modes and weights
    drop = rng.random()
    n_u, n_v, n_y = rng.standard_normal(3)
    c = world_to_camera(pose, truth)
    if not c[1] > 0.0:
        return Detection(None, source)
    ip = project(k, c)
    if not in_fov(k, ip) or drop < nm.dropout_rate:
        return Detection(None, source)
    u = min(max(ip.u + nm.sigma_uv * n_u, 0.0), math.nextafter(k.width, 0.0))
    v = min(max(ip.v + nm.sigma_uv * n_v, 0.0), math.nextafter(k.height, 0.0))
    y = max(ip.y_c + nm.sigma_y * n_y, MIN_DEPTH)
    return Detection(ImagePose(u, v, y), source)


def estimate_to_world(
    ip: ImagePose, pose: CameraPose, k: CameraIntrinsics = REFERENCE_INTRINSICS
) -> WorldPoint:
    """Back-project a pose estimate into the world, flattened onto the base plane."""
    return camera_coords_to_ground(back_project(k, ip), pose)


def camera_coords_to_ground(c, pose: CameraPose) -> WorldPoint:
    w = camera_to_world(pose, c)
    return WorldPoint(float(w[0]), float(w[1]), 0.0)


class SyntheticEstimator:
    """Noisy projection of the true intruder; owns its generator."""

    def __init__(self, noise: NoiseModel, rng: np.random.Generator, source: str = "dynamic"):
        self.noise = noise
        self.rng = rng
        self.source = source

    def detect(self, truth, pose: CameraPose, k: CameraIntrinsics, t: float) -> Detection:
        return synthetic_estimate(truth, pose, k, self.noise, self.rng, self.source)


# ---------------------------------------------------------------- replay


@dataclass(frozen=True)
class DetectionLog:
    """Time-ordered detections from one source."""

    times: tuple[float, ...] = ()
    poses: tuple[ImagePose, ...] = ()
    source: str = "dynamic"

    def __post_init__(self) -> None:
        if len(self.times) != len(self.poses):
            raise MalformedLogError("times and poses differ in length")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise MalformedLogError(
                    f"{self.source} log timestamps must be strictly increasing ({a} then {b})"
                )


def replay_estimate(log: DetectionLog, t: float, staleness: float = math.inf) -> Detection:
    """Zero-order hold: latest entry at or before ``t`` unless older than ``staleness``."""
    i = bisect.bisect_right(log.times, t) - 1
    if i < 0 or t - log.times[i] > staleness:
        return Detection(None, log.source)
    return Detection(log.poses[i], log.source)


class ReplayEstimator:
    def __init__(self, log: DetectionLog, staleness: float):
        self.log = log
        self.staleness = staleness

    def detect(self, truth, pose: CameraPose, k: CameraIntrinsics, t: float) -> Detection:
        return replay_estimate(self.log, t, self.staleness)


def parse_detection_log(text: str) -> dict[str, DetectionLog]:
    """Parse ``t,u,v,y_c,source`` rows into one log per source."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedLogError("detection log is empty; header line required") from None
    if tuple(h.strip() for h in header) != LOG_HEADER:
        raise MalformedLogError(f"bad header {header!r}, expected {','.join(LOG_HEADER)}")
    rows: dict[str, tuple[list, list]] = {s: ([], []) for s in SOURCES}
    last_t = -math.inf
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise MalformedLogError(f"line {lineno}: expected 5 fields, got {len(row)}")
        try:
            t, u, v, y = (float(x) for x in row[:4])
        except ValueError as exc:
            raise MalformedLogError(f"line {lineno}: {exc}") from None
        source = row[4].strip()
        if source not in rows:
            raise MalformedLogError(f"line {lineno}: unknown source {source!r}")
        if t < last_t:
            raise MalformedLogError(f"line {lineno}: time {t} goes backwards")
        if not y > 0.0:
            raise MalformedLogError(f"line {lineno}: y_c must be positive")
        last_t = t
        rows[source][0].append(t)
        rows[source][1].append(ImagePose(u, v, y))
    return {s: DetectionLog(tuple(ts), tuple(ps), s) for s, (ts, ps) in rows.items()}


def load_detection_log(path) -> dict[str, DetectionLog]:
    return parse_detection_log(Path(path).read_text(encoding="utf-8"))


def format_detection_log(entries: Iterable[tuple[float, Detection]]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for t, det in entries:
        if det.pose is not None:
            w.writerow([repr(float(t)), repr(float(det.pose.u)), repr(float(det.pose.v)),
                        repr(float(det.pose.y_c)), det.source])
    return out.getvalue()
