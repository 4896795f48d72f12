"""Optimal breaching point of the hemisphere perimeter game.

The breaching angle ``theta`` (azimuth of the breaching point relative to the
defender) and approach angle ``beta`` satisfy the coupled pair

    beta  = arccos(nu * cos(phi) * sin(theta) / sqrt(1 - cos^2(phi) cos^2(theta)))
    theta = psi - beta + arccos(cos(beta) / r)

There is no closed form, so ``theta`` is found by bracketed bisection on the
residual of the second equation with ``beta`` eliminated through the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import HALF_PI, RelativeState, WorldPoint

DEGENERATE_TOL = 1e-12
THETA_XTOL = 1e-12
# smallest initial bracket width; 8 doublings then reach beyond 4*pi
MIN_BRACKET = math.pi / 64.0


class DegenerateGeometryError(ValueError):
    """The approach-angle denominator vanishes (phi = 0 and sin(theta) = 0)."""


class NoConvergenceError(RuntimeError):
    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message}; best bracket {bracket}")
        self.bracket = bracket


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 200
    bracket_expansion: int = 8

    def __post_init__(self) -> None:
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.bracket_expansion < 0:
            raise ValueError("bracket_expansion must be non-negative")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class BreachingSolution:
    """Solution of the breaching equations.

    ``point`` is the breaching point in the defender-relative frame (defender
    at azimuth 0) on the unit perimeter.  ``theta_bracket`` is the final
    bisection bracket; it only has non-zero width when the residual jumps
    across zero between two neighbouring doubles (see :func:`solve_breaching`).
    """

    theta_star: float
    beta_star: float
    point: WorldPoint
    residual_norm: float
    theta_bracket: tuple[float, float] = (math.nan, math.nan)

    def __post_init__(self) -> None:
        if math.isnan(self.theta_bracket[0]):
            object.__setattr__(self, "theta_bracket", (self.theta_star, self.theta_star))


def beta_of_theta(theta: float, phi: float, nu: float) -> float:
    """Approach angle for a candidate breaching angle."""
    sp, cp = math.sin(phi), math.cos(phi)
    st = math.sin(theta)
    # 1 - cos^2(phi) cos^2(theta) without the cancellation
    den = math.hypot(sp, cp * st)
    if den < DEGENERATE_TOL:
        raise DegenerateGeometryError(
            f"approach angle undefined at phi={phi!r}, theta={theta!r}"
        )
    arg = nu * cp * st / den
    return math.acos(-1.0 if arg < -1.0 else 1.0 if arg > 1.0 else arg)


def _beta(theta: float, phi: float, nu: float) -> float:
    # beta extended by continuity (pi/2) at the removable phi = 0, sin(theta) = 0 point
    try:
        return beta_of_theta(theta, phi, nu)
    except DegenerateGeometryError:
        return HALF_PI


def residual_function(z: RelativeState):
    """``theta -> theta_residual(theta, z)`` with the per-state constants hoisted."""
    if z.r < 1.0:
        raise ValueError(f"residual needs r >= 1, got r={z.r}")
    sp, cp = math.sin(z.phi), math.cos(z.phi)
    nu_cp = z.nu * cp
    psi, inv_r = z.psi, 1.0 / z.r
    sin, cos, acos, hypot = math.sin, math.cos, math.acos, math.hypot

    def f(theta: float) -> float:
        st = sin(theta)
        den = hypot(sp, cp * st)
        if den < DEGENERATE_TOL:
            beta = HALF_PI
        else:
            arg = nu_cp * st / den
            beta = acos(-1.0 if arg < -1.0 else 1.0 if arg > 1.0 else arg)
        c = cos(beta) * inv_r
        return theta - (psi - beta + acos(-1.0 if c < -1.0 else 1.0 if c > 1.0 else c))

    return f


def theta_residual(theta: float, z: RelativeState) -> float:
    """``theta - (psi - beta(theta) + arccos(cos(beta(theta)) / r))``."""
    return residual_function(z)(theta)


def second_equation_residual(theta: float, beta: float, z: RelativeState) -> float:
    """``theta - (psi - beta + arccos(cos(beta) / r))`` for a given ``beta``."""
    c = math.cos(beta) / z.r
    return theta - (z.psi - beta + math.acos(-1.0 if c < -1.0 else 1.0 if c > 1.0 else c))


def _bisect(f, a: float, fa: float, b: float, fb: float, cfg: SolverConfig):
    # invariant: fa < 0 <= fb; returns the final bracket and its residuals
    for _ in range(cfg.max_iterations):
        if fb == 0.0:
            return b, fb, b, fb
        if b - a <= THETA_XTOL and min(-fa, fb) <= cfg.tolerance:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = f(mid)
        if fm < 0.0:
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    return a, fa, b, fb


def _beta_across_gap(z: RelativeState, theta: float, b_lo: float, b_hi: float, cfg: SolverConfig):
    """``beta`` in ``[b_lo, b_hi]`` solving the second equation at ``theta``, or None.

    The second-equation residual is strictly increasing in ``beta`` for r > 1.
    """
    lo, hi = min(b_lo, b_hi), max(b_lo, b_hi)
    g_lo, g_hi = second_equation_residual(theta, lo, z), second_equation_residual(theta, hi, z)
    if g_lo > cfg.tolerance or g_hi < -cfg.tolerance:
        return None
    for _ in range(cfg.max_iterations):
        if min(abs(g_lo), abs(g_hi)) <= cfg.tolerance and hi - lo <= THETA_XTOL:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = second_equation_residual(theta, mid, z)
        if g < 0.0:
            lo, g_lo = mid, g
        else:
            hi, g_hi = mid, g
    return lo if abs(g_lo) <= abs(g_hi) else hi


def solve_breaching(z: RelativeState, cfg: SolverConfig = DEFAULT_SOLVER) -> BreachingSolution:
    """Optimal breaching and approach angles for the relative state ``z``.

    Negative ``psi`` is solved as the mirror image of ``|psi|``.

    For a defender on (or numerically indistinguishable from) the base plane
    the residual can jump across zero between two neighbouring doubles near
    ``theta = pi``, where ``beta`` swings between its one-sided limits.  The
    solution is then reported at that gap with ``beta`` taken from the second
    equation, which always has a root between the two one-sided values.
    """
    if not z.r > 1.0:
        raise ValueError(f"intruder must be strictly outside the perimeter, got r={z.r}")
    sign = -1.0 if z.psi < 0.0 else 1.0
    psi = abs(z.psi)
    if psi == 0.0:
        return BreachingSolution(0.0, _beta(0.0, z.phi, z.nu), WorldPoint(1.0, 0.0, 0.0), 0.0)
    zp = RelativeState(psi, z.phi, z.r, z.nu)
    f = residual_function(zp)
    lo, flo = 0.0, f(0.0)
    hi, fhi = psi, f(psi)
    width = max(psi, MIN_BRACKET)
    expansions = 0
    while fhi < 0.0:
        if expansions >= cfg.bracket_expansion:
            raise NoConvergenceError("no sign change after bracket expansion", (lo, hi))
        lo, flo = hi, fhi
        width *= 2.0
        hi = width
        fhi = f(hi)
        expansions += 1
    a, fa, b, fb = _bisect(f, lo, flo, hi, fhi, cfg)
    if min(-fa, fb) <= cfg.tolerance:
        theta = a if -fa <= fb else b
        beta = _beta(theta, zp.phi, zp.nu)
        bracket = (theta, theta)
    else:
        beta = None
        if b - a <= THETA_XTOL:
            beta = _beta_across_gap(zp, a, _beta(a, zp.phi, zp.nu), _beta(b, zp.phi, zp.nu), cfg)
        if beta is None:
            raise NoConvergenceError("bisection did not reach the residual tolerance", (sign * a, sign * b))
        theta, bracket = a, (a, b)
    res = abs(second_equation_residual(theta, beta, zp))
    if sign < 0.0:
        # mirroring flips the approach angle to its supplement
        theta, beta, bracket = -theta, math.pi - beta, (-bracket[1], -bracket[0])
    return BreachingSolution(theta, beta, WorldPoint(math.cos(theta), math.sin(theta), 0.0), res, bracket)


def verify_solution(sol: BreachingSolution, z: RelativeState) -> tuple[float, float]:
    """Residuals of both breaching equations at the reported solution.

    The first is the distance from ``beta_star`` to the approach angles taken
    over ``sol.theta_bracket`` (a single value unless the solver had to
    report a jump between neighbouring doubles).  The second re-evaluates
    the breaching-angle equation with ``beta_star``.
    """
    lo, hi = sol.theta_bracket
    b1, b2 = _beta(lo, z.phi, z.nu), _beta(hi, z.phi, z.nu)
    gap = max(min(b1, b2) - sol.beta_star, sol.beta_star - max(b1, b2), 0.0)
    return gap, abs(second_equation_residual(sol.theta_star, sol.beta_star, z))
