"""Pinhole camera model.

Camera axes: X_c right, Y_c forward along the optical axis, Z_c up.  Image
``u`` grows to the right and ``v`` grows downwards, so

    u = u0 + f * x_c / y_c,    v = v0 - f * z_c / y_c.

The intruder pose is the triple ``(u, v, y_c)``: pixel position plus depth
along the optical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DefenderState, defender_to_world


class BehindCameraError(ValueError):
    """The point is at or behind the image plane (``y_c <= 0``)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Image size, vertical field of view (degrees), focal length and
    principal point, all in pixels except ``fov``."""

    width: int = 640
    height: int = 360
    fov: float = 90.0
    f: float = 180.0
    u0: float = 320.0
    v0: float = 180.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or not self.f > 0.0:
            raise ValueError("width, height and f must be positive")
        if not 0.0 <= self.u0 < self.width or not 0.0 <= self.v0 < self.height:
            raise ValueError("principal point must lie inside the image")
        if not 0.0 < self.fov < 180.0:
            raise ValueError("fov must lie in (0, 180) degrees")
        f_expected = 0.5 * self.height / math.tan(self.fov * math.pi / 360.0)
        if abs(self.f - f_expected) > 0.5:
            raise ValueError(
                f"focal length {self.f} inconsistent with vertical fov {self.fov} "
                f"and height {self.height} (expected {f_expected:.3f})"
            )


REFERENCE_INTRINSICS = CameraIntrinsics()


@dataclass(frozen=True)
class ImagePose:
    u: float
    v: float
    y_c: float


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera position in the world and the rotation taking world directions
    to camera axes (rows are the camera axes expressed in the world)."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.position, dtype=float).reshape(3)
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-10) or abs(np.linalg.det(rot) - 1.0) > 1e-10:
            raise ValueError("camera orientation must be a proper rotation")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def _trusted(cls, position: np.ndarray, rotation: np.ndarray) -> "CameraPose":
        # rotation is orthonormal by construction; skip the checks
        pose = object.__new__(cls)
        object.__setattr__(pose, "position", position)
        object.__setattr__(pose, "rotation", rotation)
        return pose

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[1]


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``p -> rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def rotation_angle(self) -> float:
        c = 0.5 * (np.trace(self.rotation) - 1.0)
        return math.acos(min(1.0, max(-1.0, c)))


def world_to_camera(pose: CameraPose, p) -> np.ndarray:
    return pose.rotation @ (np.asarray(p, dtype=float) - pose.position)


def camera_to_world(pose: CameraPose, c) -> np.ndarray:
    return pose.rotation.T @ np.asarray(c, dtype=float) + pose.position


def project(k: CameraIntrinsics, c) -> ImagePose:
    x, y, z = float(c[0]), float(c[1]), float(c[2])
    if not y > 0.0:
        raise BehindCameraError(f"point is behind the camera (y_c={y})")
    return ImagePose(k.u0 + k.f * x / y, k.v0 - k.f * z / y, y)


def back_project(k: CameraIntrinsics, ip: ImagePose) -> np.ndarray:
    y = ip.y_c
    if not y > 0.0:
        raise BehindCameraError(f"depth must be positive (y_c={y})")
    return np.array([(ip.u - k.u0) * y / k.f, y, -(ip.v - k.v0) * y / k.f])


def in_fov(k: CameraIntrinsics, ip: ImagePose) -> bool:
    return 0.0 <= ip.u < k.width and 0.0 <= ip.v < k.height and ip.y_c > 0.0


def level_camera_pose(position, gaze_azimuth: float) -> CameraPose:
    """Camera with a level horizon whose optical axis points along the world
    azimuth ``gaze_azimuth``."""
    cg, sg = math.cos(gaze_azimuth), math.sin(gaze_azimuth)
    rot = np.array([[sg, -cg, 0.0], [cg, sg, 0.0], [0.0, 0.0, 1.0]])
    return CameraPose._trusted(np.array(position, dtype=float).reshape(3), rot)


def defender_camera_pose(d: DefenderState, gaze_azimuth: float) -> CameraPose:
    return level_camera_pose(defender_to_world(d), gaze_azimuth)


def rig_transform(a: CameraPose, b: CameraPose) -> RigidTransform:
    """Transform taking camera-``a`` coordinates to camera-``b`` coordinates."""
    rot = b.rotation @ a.rotation.T
    return RigidTransform(rot, b.rotation @ (a.position - b.position))
