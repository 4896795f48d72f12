"""Two-view fusion in the dynamic defender's camera frame.

The static defender's estimate is carried into the dynamic frame with the
inverse rig transform and blended per axis with convex weights
``(alpha, delta, gamma)`` on ``(x_c, y_c, z_c)``; weight 1 keeps the dynamic
view only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import CameraIntrinsics, RigidTransform, back_project
from .perception import Detection


@dataclass(frozen=True)
class FusionWeights:
    alpha: float
    delta: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("alpha", "delta", "gamma"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"fusion weight {name}={w} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.delta, self.gamma])

    @property
    def dynamic_only(self) -> bool:
        return self.alpha == 1.0 and self.delta == 1.0 and self.gamma == 1.0


DYNAMIC_ONLY = FusionWeights(1.0, 1.0, 1.0)
SAMPLE_AVERAGE = FusionWeights(0.5, 0.5, 0.5)
BEST_WEIGHTS = FusionWeights(0.7, 0.3, 0.5)


def to_dynamic_frame(static_estimate, T: RigidTransform) -> np.ndarray:
    """Static-camera coordinates into the dynamic camera frame, where ``T``
    maps dynamic-camera coordinates to static-camera coordinates."""
    return T.rotation.T @ (np.asarray(static_estimate, dtype=float) - T.translation)


def fuse(p1, p2, w: FusionWeights) -> np.ndarray:
    if not isinstance(w, FusionWeights):
        w = FusionWeights(*w)
    a = w.as_array()
    return np.asarray(p1, dtype=float) * a + np.asarray(p2, dtype=float) * (1.0 - a)


def fused_single_fallback(
    d1: Detection,
    d2: Detection,
    T: RigidTransform,
    w: FusionWeights,
    k: CameraIntrinsics,
    k_static: Optional[CameraIntrinsics] = None,
) -> Optional[np.ndarray]:
    """Fuse dynamic (``d1``) and static (``d2``) detections; a lone view is
    used at full weight.

    With weights (1, 1, 1) the static view carries no weight on any axis and
    is never consulted, so the result equals the dynamic view alone.
    """
    k_static = k_static or k
    use_static = d2.present and not w.dynamic_only
    p1 = back_project(k, d1.pose) if d1.present else None
    p2 = to_dynamic_frame(back_project(k_static, d2.pose), T) if use_static else None
    if p1 is not None and p2 is not None:
        return fuse(p1, p2, w)
    if p1 is not None:
        return p1
    return p2
