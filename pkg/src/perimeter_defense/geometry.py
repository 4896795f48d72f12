"""Hemisphere and base-plane geometry.

Conventions: the hemisphere is centred at the world origin with its base on
the ``z = 0`` plane.  Azimuths are measured counter-clockwise from the world
``x`` axis, elevations up from the base plane.  All angles are radians.
The defender lives on the hemisphere surface, the intruder on the base plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def wrap_angle(x: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    a = math.fmod(x + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class DefenderState:
    """Defender on the hemisphere surface: azimuth, elevation and radius."""

    psi_d: float
    phi_d: float
    radius: float = 1.0

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not -1e-12 <= self.phi_d <= HALF_PI + 1e-12:
            raise ValueError(f"phi_d must lie in [0, pi/2], got {self.phi_d}")
        object.__setattr__(self, "psi_d", wrap_angle(self.psi_d))
        object.__setattr__(self, "phi_d", _clamp(self.phi_d, 0.0, HALF_PI))


@dataclass(frozen=True)
class IntruderState:
    """Intruder on the base plane: azimuth and distance from the centre."""

    psi_a: float
    r: float

    def __post_init__(self) -> None:
        if not self.r >= 0.0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        object.__setattr__(self, "psi_a", wrap_angle(self.psi_a))


@dataclass(frozen=True)
class RelativeState:
    """Game state seen from the defender: (psi, phi, r) plus the speed ratio.

    ``r`` is in units of the hemisphere radius.
    """

    psi: float
    phi: float
    r: float
    nu: float

    def __post_init__(self) -> None:
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"speed ratio nu must lie in (0, 1], got {self.nu}")
        if not -1e-12 <= self.phi <= HALF_PI + 1e-12:
            raise ValueError(f"phi must lie in [0, pi/2], got {self.phi}")
        object.__setattr__(self, "psi", wrap_angle(self.psi))
        object.__setattr__(self, "phi", _clamp(self.phi, 0.0, HALF_PI))


def defender_to_world(d: DefenderState) -> WorldPoint:
    cp = math.cos(d.phi_d)
    return WorldPoint(
        d.radius * cp * math.cos(d.psi_d),
        d.radius * cp * math.sin(d.psi_d),
        d.radius * math.sin(d.phi_d),
    )


def intruder_to_world(a: IntruderState) -> WorldPoint:
    return WorldPoint(a.r * math.cos(a.psi_a), a.r * math.sin(a.psi_a), 0.0)


def intruder_from_world(p) -> IntruderState:
    """Intruder state from a world point; the height is discarded."""
    return IntruderState(math.atan2(p[1], p[0]), math.hypot(p[0], p[1]))


def relative_state(d: DefenderState, a: IntruderState, nu: float) -> RelativeState:
    return RelativeState(wrap_angle(a.psi_a - d.psi_d), d.phi_d, a.r / d.radius, nu)


def world_points_from_relative(
    z: RelativeState, psi_d: float = 0.0, radius: float = 1.0
) -> tuple[WorldPoint, WorldPoint]:
    """Rebuild (defender, intruder) world points from a relative state."""
    d = DefenderState(psi_d, z.phi, radius)
    a = IntruderState(psi_d + z.psi, z.r * radius)
    return defender_to_world(d), intruder_to_world(a)


def perimeter_point(azimuth: float, radius: float = 1.0) -> WorldPoint:
    return WorldPoint(radius * math.cos(azimuth), radius * math.sin(azimuth), 0.0)


def geodesic_arc(d: DefenderState, theta: float) -> float:
    """Great-circle distance from the defender to the perimeter point at
    relative azimuth ``theta``."""
    c = _clamp(math.cos(d.phi_d) * math.cos(theta), -1.0, 1.0)
    return d.radius * math.acos(c)


def planar_distance(
    a: IntruderState, theta: float, psi_d: float, radius: float = 1.0
) -> float:
    """Base-plane distance from the intruder to the perimeter point at
    relative azimuth ``theta`` (relative to the defender azimuth ``psi_d``)."""
    psi = a.psi_a - psi_d
    sq = a.r * a.r + radius * radius - 2.0 * a.r * radius * math.cos(psi - theta)
    return math.sqrt(sq) if sq > 0.0 else 0.0


def euclidean(p, q) -> float:
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2)


def step_defender_geodesic(
    d: DefenderState, target_theta: float, distance: float
) -> DefenderState:
    """Move the defender ``distance`` along the great circle towards the
    perimeter point at relative azimuth ``target_theta``.

    Overshooting lands exactly on the target.  A defender already sitting on
    the target does not move.
    """
    if distance < 0.0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    if distance == 0.0:
        return d
    target_az = d.psi_d + target_theta
    cp = math.cos(d.phi_d)
    px, py, pz = cp * math.cos(d.psi_d), cp * math.sin(d.psi_d), math.sin(d.phi_d)
    qx, qy = math.cos(target_az), math.sin(target_az)
    dot = px * qx + py * qy
    omega = math.acos(_clamp(dot, -1.0, 1.0))
    if omega == 0.0:
        return d
    s = distance / d.radius
    if s >= omega:
        return DefenderState(target_az, 0.0, d.radius)
    # unit tangent at p pointing along the minor arc towards q
    tx, ty, tz = qx - dot * px, qy - dot * py, -dot * pz
    tn = math.sqrt(tx * tx + ty * ty + tz * tz)
    if tn < 1e-15:
        # antipodal on the equator: go over the top
        tx, ty, tz, tn = 0.0, 0.0, 1.0, 1.0
    cs, sn = math.cos(s), math.sin(s) / tn
    x, y, z = cs * px + sn * tx, cs * py + sn * ty, cs * pz + sn * tz
    h = math.hypot(x, y)
    phi = math.atan2(max(z, 0.0), h)
    psi = math.atan2(y, x) if h > 1e-15 else target_az
    return DefenderState(psi, phi, d.radius)
