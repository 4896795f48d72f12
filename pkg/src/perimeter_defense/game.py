"""Perception-action loop of the hemisphere perimeter game.

Each step: perceive the intruder, solve the breaching point from the
(estimated) relative state, move the defender one geodesic step towards it,
move the intruder, then test for breach or capture.  Scores use true states.

Lengths are in hemisphere radii (R = 1) and times in seconds.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .breaching import DEFAULT_SOLVER, NoConvergenceError, SolverConfig, solve_breaching
from .camera import (
    REFERENCE_INTRINSICS,
    CameraIntrinsics,
    CameraPose,
    defender_camera_pose,
    level_camera_pose,
    rig_transform,
)
from .fusion import BEST_WEIGHTS, FusionWeights, fused_single_fallback
from .geometry import (
    DefenderState,
    IntruderState,
    WorldPoint,
    defender_to_world,
    euclidean,
    geodesic_arc,
    intruder_to_world,
    planar_distance,
    relative_state,
    step_defender_geodesic,
    wrap_angle,
)
from .perception import (
    DEFAULT_NOISE,
    Detection,
    DetectionLog,
    NoiseModel,
    ReplayEstimator,
    SyntheticEstimator,
    camera_coords_to_ground,
    make_rng,
)

GROUND_TRUTH = "ground_truth"
SINGLE_VIEW = "single_view"
MULTIVIEW = "multiview"
PERCEPTION_MODES = (GROUND_TRUTH, SINGLE_VIEW, MULTIVIEW)

OPTIMAL = "optimal"
SCRIPTED = "scripted"
INTRUDER_STRATEGIES = (OPTIMAL, SCRIPTED)

DEFENDER = "defender"
INTRUDER = "intruder"
TIMEOUT = "timeout"

# estimated intruders at or inside the perimeter are pushed just outside it
MIN_ESTIMATE_R = 1.0 + 1e-6
STATIC_OFFSET = 2.0
STATIC_HEIGHT = 0.5
# a scripted intruder this close to its waypoint has reached it
WAYPOINT_REACHED = 1e-12

TRAJECTORY_HEADER = (
    "t", "psi_d", "phi_d", "psi_a", "r", "theta_star",
    "delta_d", "est_err", "detected_dyn", "detected_stat",
)


class GameAbortError(RuntimeError):
    """The breaching solver failed mid-game."""


@dataclass(frozen=True)
class ReplaySource:
    dynamic: DetectionLog = DetectionLog(source="dynamic")
    static: DetectionLog = DetectionLog(source="static")
    staleness: float = 0.1


@dataclass(frozen=True)
class GameConfig:
    defender: DefenderState = DefenderState(0.0, math.pi / 4)
    intruder: IntruderState = IntruderState(0.0, 2.0)
    static_position: Optional[tuple[float, float, float]] = None
    static_gaze: Optional[float] = None
    nu: float = 0.9
    v_d: float = 0.5
    dt: float = 0.02
    max_time: float = 60.0
    perception_mode: str = MULTIVIEW
    weights: FusionWeights = BEST_WEIGHTS
    noise: NoiseModel = DEFAULT_NOISE
    intrinsics: CameraIntrinsics = REFERENCE_INTRINSICS
    intruder_strategy: str = OPTIMAL
    waypoints: tuple[tuple[float, float], ...] = ()
    capture_epsilon: float = 0.01
    breach_epsilon: float = 0.0
    seed: int = 0
    solver: SolverConfig = DEFAULT_SOLVER
    replay: Optional[ReplaySource] = None

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.v_d > 0.0:
            raise ValueError("v_d must be positive")
        if not self.max_time > 0.0:
            raise ValueError("max_time must be positive")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if not self.capture_epsilon > 0.0:
            raise ValueError("capture_epsilon must be positive")
        if self.breach_epsilon < 0.0:
            raise ValueError("breach_epsilon must be non-negative")
        if self.defender.radius != 1.0:
            raise ValueError("games are played on the unit hemisphere (radius 1)")
        if not self.intruder.r > 1.0 + self.breach_epsilon:
            raise ValueError(
                f"initial intruder radius {self.intruder.r} must exceed 1 + breach_epsilon"
            )
        if self.perception_mode not in PERCEPTION_MODES:
            raise ValueError(f"unknown perception mode {self.perception_mode!r}")
        if self.intruder_strategy not in INTRUDER_STRATEGIES:
            raise ValueError(f"unknown intruder strategy {self.intruder_strategy!r}")
        if self.intruder_strategy == SCRIPTED and not self.waypoints:
            raise ValueError("scripted intruder needs at least one waypoint")

    @property
    def step_length(self) -> float:
        return self.v_d * self.dt

    @property
    def intruder_step_length(self) -> float:
        return self.nu * self.v_d * self.dt


@dataclass(frozen=True)
class GameState:
    t: float
    defender: DefenderState
    intruder: IntruderState
    gaze: float = 0.0
    waypoint_index: int = 0


@dataclass(frozen=True)
class StepRecord:
    t: float
    psi_d: float
    phi_d: float
    psi_a: float
    r: float
    theta_star: float
    delta_d: float
    est_err: float
    detected_dyn: bool
    detected_stat: bool
    held: bool
    dyn_detection: Optional[Detection] = None
    static_detection: Optional[Detection] = None

    def csv_row(self) -> list[str]:
        return [
            repr(self.t), repr(self.psi_d), repr(self.phi_d), repr(self.psi_a), repr(self.r),
            repr(self.theta_star), repr(self.delta_d), repr(self.est_err),
            str(int(self.detected_dyn)), str(int(self.detected_stat)),
        ]


@dataclass
class GameResult:
    winner: str
    t_f: float
    delta_d_terminal: float
    records: list[StepRecord] = field(default_factory=list)
    final_state: Optional[GameState] = None

    @property
    def steps(self) -> int:
        return len(self.records)

    @property
    def delta_d_series(self) -> np.ndarray:
        return np.array([rec.delta_d for rec in self.records])

    @property
    def estimate_error_series(self) -> np.ndarray:
        return np.array([rec.est_err for rec in self.records])

    @property
    def delta_d_mean(self) -> float:
        return float(np.mean(self.delta_d_series)) if self.records else self.delta_d_terminal

    @property
    def mean_estimate_error(self) -> float:
        errs = [rec.est_err for rec in self.records if not math.isnan(rec.est_err)]
        return float(np.mean(errs)) if errs else math.nan

    @property
    def hold_steps(self) -> int:
        return sum(rec.held for rec in self.records)

    def trajectory_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for rec in self.records:
            w.writerow(rec.csv_row())
        return out.getvalue()

    def detection_entries(self) -> list[tuple[float, Detection]]:
        entries = []
        for rec in self.records:
            for det in (rec.dyn_detection, rec.static_detection):
                if det is not None and det.present:
                    entries.append((rec.t, det))
        return entries

    def summary(self) -> dict:
        return {
            "winner": self.winner,
            "t_f": self.t_f,
            "delta_d_terminal": self.delta_d_terminal,
            "delta_d_mean": self.delta_d_mean,
            "mean_l2_err": self.mean_estimate_error,
            "steps": self.steps,
            "hold_steps": self.hold_steps,
        }


# ------------------------------------------------------------ pure helpers


def _horizontal_azimuth(src, dst) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def default_static_position(
    defender: DefenderState,
    intruder: IntruderState,
    offset: float = STATIC_OFFSET,
    height: float = STATIC_HEIGHT,
) -> WorldPoint:
    """Side-on placement: ``offset`` away from the intruder, perpendicular to
    the dynamic defender's line of sight, so the two optical axes start out
    perpendicular.  Prefers the side the intruder drifts away from."""
    d = defender_to_world(defender)
    a = intruder_to_world(intruder)
    ux, uy = a.x - d.x, a.y - d.y
    n = math.hypot(ux, uy)
    ux, uy = ux / n, uy / n
    side = 1.0 if wrap_angle(intruder.psi_a - defender.psi_d) >= 0.0 else -1.0
    candidates = [(side * uy, -side * ux), (-side * uy, side * ux)]
    for nx, ny in candidates:
        sx, sy = a.x + offset * nx, a.y + offset * ny
        if math.hypot(sx, sy) >= 1.2:
            return WorldPoint(sx, sy, height)
    nx, ny = candidates[0]
    return WorldPoint(a.x + offset * nx, a.y + offset * ny, height)


def check_termination(state: GameState, cfg: GameConfig) -> Optional[str]:
    """Winner if the state is terminal, else ``None``.

    Breach (``r <= 1 + breach_epsilon``) is an intruder win unless the
    defender sits on the breach azimuth at the base plane; capture
    (``|psi| + phi_d <= capture_epsilon`` with the intruder outside) is a
    defender win; reaching ``max_time`` is a timeout.
    """
    psi = wrap_angle(state.intruder.psi_a - state.defender.psi_d)
    aligned = abs(psi) + abs(state.defender.phi_d) <= cfg.capture_epsilon
    if state.intruder.r <= 1.0 + cfg.breach_epsilon:
        return DEFENDER if aligned else INTRUDER
    if aligned:
        return DEFENDER
    if state.t >= cfg.max_time - 1e-9:
        return TIMEOUT
    return None


def true_breaching_angle(state: GameState, cfg: GameConfig) -> float:
    z = relative_state(state.defender, state.intruder, cfg.nu)
    try:
        return solve_breaching(z, cfg.solver).theta_star
    except NoConvergenceError as exc:
        raise GameAbortError(f"breaching solve failed at t={state.t}: {exc}") from exc


def running_delta_d(state: GameState, cfg: GameConfig, theta: Optional[float] = None) -> float:
    if theta is None:
        theta = true_breaching_angle(state, cfg)
    d = state.defender
    return geodesic_arc(d, theta) - planar_distance(state.intruder, theta, d.psi_d)


def delta_d(state: GameState, cfg: GameConfig, winner: Optional[str] = None) -> float:
    """Score of a state: arc minus planar distance to the optimal breaching
    point while running; at a breach the defender's arc to the breach point;
    at a capture minus the defender-intruder distance."""
    if winner == INTRUDER:
        theta = state.intruder.psi_a - state.defender.psi_d
        return geodesic_arc(state.defender, theta)
    if winner == DEFENDER:
        return -euclidean(defender_to_world(state.defender), intruder_to_world(state.intruder))
    return running_delta_d(state, cfg)


def intruder_direction(
    state: GameState, cfg: GameConfig, theta_true: Optional[float] = None
) -> tuple[float, float]:
    """Unit base-plane heading of the intruder (zero when holding)."""
    a = intruder_to_world(state.intruder)
    if cfg.intruder_strategy == OPTIMAL:
        if theta_true is None:
            theta_true = true_breaching_angle(state, cfg)
        az = state.defender.psi_d + theta_true
        tx, ty = math.cos(az), math.sin(az)
    else:
        if state.waypoint_index >= len(cfg.waypoints):
            return (0.0, 0.0)
        tx, ty = cfg.waypoints[state.waypoint_index]
    dx, dy = tx - a.x, ty - a.y
    n = math.hypot(dx, dy)
    if n < WAYPOINT_REACHED:
        return (0.0, 0.0)
    return (dx / n, dy / n)


def _crossing_fraction(a0, a1, radius: float) -> float:
    """Smallest s in [0, 1] with |a0 + s (a1 - a0)| = radius (a0 outside)."""
    dx, dy = a1[0] - a0[0], a1[1] - a0[1]
    qa = dx * dx + dy * dy
    qb = 2.0 * (a0[0] * dx + a0[1] * dy)
    qc = a0[0] * a0[0] + a0[1] * a0[1] - radius * radius
    if qa == 0.0:
        return 1.0
    disc = max(qb * qb - 4.0 * qa * qc, 0.0)
    s = (-qb - math.sqrt(disc)) / (2.0 * qa)
    return min(max(s, 0.0), 1.0)


# -------------------------------------------------------------------- game


@dataclass(frozen=True)
class Perception:
    estimate: Optional[WorldPoint]
    dyn: Optional[Detection] = None
    static: Optional[Detection] = None


class Game:
    """One game instance; owns its per-view random streams."""

    def __init__(self, cfg: GameConfig):
        self.cfg = cfg
        self.k = 0
        self.defender = cfg.defender
        self.intruder = cfg.intruder
        self.waypoint_index = 0
        if cfg.static_position is None:
            sp = default_static_position(cfg.defender, cfg.intruder)
        else:
            sp = WorldPoint(*cfg.static_position)
        a0 = intruder_to_world(cfg.intruder)
        sg = cfg.static_gaze if cfg.static_gaze is not None else _horizontal_azimuth(sp, a0)
        self.static_pose = level_camera_pose(sp, sg)
        self.gaze = _horizontal_azimuth(defender_to_world(cfg.defender), a0)
        if cfg.replay is not None:
            self.dyn_estimator = ReplayEstimator(cfg.replay.dynamic, cfg.replay.staleness)
            self.static_estimator = ReplayEstimator(cfg.replay.static, cfg.replay.staleness)
        else:
            dyn_ss, static_ss = np.random.SeedSequence(cfg.seed).spawn(2)
            self.dyn_estimator = SyntheticEstimator(cfg.noise, make_rng(dyn_ss), "dynamic")
            self.static_estimator = SyntheticEstimator(cfg.noise, make_rng(static_ss), "static")
        self.records: list[StepRecord] = []
        self.result: Optional[GameResult] = None

    @property
    def t(self) -> float:
        return self.k * self.cfg.dt

    @property
    def state(self) -> GameState:
        return GameState(self.t, self.defender, self.intruder, self.gaze, self.waypoint_index)

    def dynamic_pose(self) -> CameraPose:
        return defender_camera_pose(self.defender, self.gaze)

    def perceive(self) -> Perception:
        cfg = self.cfg
        truth = intruder_to_world(self.intruder)
        if cfg.perception_mode == GROUND_TRUTH:
            return Perception(truth)
        t = self.t
        k = cfg.intrinsics
        dyn_pose = self.dynamic_pose()
        d1 = self.dyn_estimator.detect(truth, dyn_pose, k, t)
        if cfg.perception_mode == SINGLE_VIEW:
            d2 = Detection(None, "static")
            T = None
            c = fused_single_fallback(d1, d2, None, cfg.weights, k) if d1.present else None
        else:
            d2 = self.static_estimator.detect(truth, self.static_pose, k, t)
            T = rig_transform(dyn_pose, self.static_pose)
            c = fused_single_fallback(d1, d2, T, cfg.weights, k)
        est = camera_coords_to_ground(c, dyn_pose) if c is not None else None
        return Perception(est, d1, d2)

    def step(self) -> StepRecord:
        if self.result is not None:
            raise RuntimeError("game already finished")
        cfg = self.cfg
        if cfg.intruder_strategy == SCRIPTED:
            self._skip_reached_waypoints()
        state = self.state
        theta_true = true_breaching_angle(state, cfg)
        dd = running_delta_d(state, cfg, theta_true)

        p = self.perceive()
        d_old, a_old = self.defender, self.intruder
        truth = intruder_to_world(a_old)
        theta_cmd = None
        if p.estimate is not None:
            est = IntruderState(math.atan2(p.estimate.y, p.estimate.x),
                                max(math.hypot(p.estimate.x, p.estimate.y), MIN_ESTIMATE_R))
            if cfg.perception_mode == GROUND_TRUTH:
                theta_cmd = theta_true
            else:
                z_est = relative_state(d_old, est, cfg.nu)
                try:
                    theta_cmd = solve_breaching(z_est, cfg.solver).theta_star
                except NoConvergenceError as exc:
                    raise GameAbortError(f"breaching solve failed at t={state.t}: {exc}") from exc
            self.defender = step_defender_geodesic(d_old, theta_cmd, cfg.step_length)
            self.gaze = _horizontal_azimuth(defender_to_world(self.defender), p.estimate)
            est_err = math.hypot(truth.x - p.estimate.x, truth.y - p.estimate.y)
        else:
            est_err = math.nan

        # intruder move from the state at the start of the step
        ux, uy = intruder_direction(state, cfg, theta_true)
        length = cfg.intruder_step_length
        if cfg.intruder_strategy == SCRIPTED and (ux or uy):
            wx, wy = cfg.waypoints[self.waypoint_index]
            remaining = math.hypot(wx - truth.x, wy - truth.y)
            if remaining <= length:
                length = remaining
                self.waypoint_index += 1
        a_new = (truth.x + length * ux, truth.y + length * uy)
        self.intruder = IntruderState(math.atan2(a_new[1], a_new[0]), math.hypot(*a_new))

        rec = StepRecord(
            state.t, d_old.psi_d, d_old.phi_d, a_old.psi_a, a_old.r, theta_true, dd,
            0.0 if cfg.perception_mode == GROUND_TRUTH else est_err,
            bool(p.dyn is not None and p.dyn.present),
            bool(p.static is not None and p.static.present),
            p.estimate is None,
            p.dyn, p.static,
        )
        self.records.append(rec)
        self.k += 1
        self._terminate(state, d_old, theta_cmd, truth, a_new)
        return rec

    def _skip_reached_waypoints(self) -> None:
        a = intruder_to_world(self.intruder)
        wps = self.cfg.waypoints
        while self.waypoint_index < len(wps):
            wx, wy = wps[self.waypoint_index]
            if math.hypot(wx - a.x, wy - a.y) >= WAYPOINT_REACHED:
                break
            self.waypoint_index += 1

    def _terminate(self, start: GameState, d_old, theta_cmd, a0, a1) -> None:
        cfg = self.cfg
        breach_r = 1.0 + cfg.breach_epsilon
        if self.intruder.r <= breach_r:
            s = _crossing_fraction(a0, a1, breach_r)
            d_s = d_old
            if theta_cmd is not None:
                d_s = step_defender_geodesic(d_old, theta_cmd, s * cfg.step_length)
            cx, cy = a0[0] + s * (a1[0] - a0[0]), a0[1] + s * (a1[1] - a0[1])
            crossing = GameState(start.t + s * cfg.dt, d_s,
                                 IntruderState(math.atan2(cy, cx), breach_r))
            winner = check_termination(crossing, cfg)
            self._finish(winner, crossing)
            return
        state = self.state
        winner = check_termination(state, cfg)
        if winner is not None:
            self._finish(winner, state)

    def _finish(self, winner: str, state: GameState) -> None:
        if winner == TIMEOUT:
            dd = running_delta_d(state, self.cfg)
        else:
            dd = delta_d(state, self.cfg, winner)
        self.result = GameResult(winner, state.t, dd, self.records, self.state)

    def run(self) -> GameResult:
        while self.result is None:
            self.step()
        return self.result


def play(cfg: GameConfig) -> GameResult:
    return Game(cfg).run()


def with_mode(cfg: GameConfig, mode: str, **changes) -> GameConfig:
    return replace(cfg, perception_mode=mode, **changes)
