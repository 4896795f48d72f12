"""Monte-Carlo trials, fusion-weight ablation sweeps and scenario suites.

Every trial is keyed by its own seed, so results do not depend on the order
or the process in which trials run.  Trial seeds are derived from a base
seed with BLAKE2b (see :func:`trial_seed`).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .breaching import solve_breaching
from .camera import defender_camera_pose, in_fov, level_camera_pose, project, world_to_camera
from .fusion import FusionWeights
from .game import (
    DEFENDER,
    GROUND_TRUTH,
    MULTIVIEW,
    GameAbortError,
    GameConfig,
    GameResult,
    default_static_position,
    play,
)
from .geometry import (
    HALF_PI,
    DefenderState,
    IntruderState,
    RelativeState,
    defender_to_world,
    geodesic_arc,
    intruder_to_world,
    planar_distance,
)

ABLATION_GRID: tuple[tuple[str, FusionWeights], ...] = (
    ("1", FusionWeights(1.0, 1.0, 1.0)),
    ("2a", FusionWeights(0.1, 0.1, 0.9)),
    ("2b", FusionWeights(0.1, 0.9, 0.1)),
    ("2c", FusionWeights(0.9, 0.1, 0.1)),
    ("3a", FusionWeights(0.1, 0.9, 0.9)),
    ("3b", FusionWeights(0.9, 0.1, 0.9)),
    ("3c", FusionWeights(0.9, 0.9, 0.1)),
    ("4a", FusionWeights(0.2, 0.8, 0.1)),
    ("4b", FusionWeights(0.3, 0.7, 0.1)),
    ("4c", FusionWeights(0.8, 0.3, 0.2)),
    ("4d", FusionWeights(0.7, 0.5, 0.3)),
    ("4e", FusionWeights(0.5, 0.5, 0.5)),
    ("4f", FusionWeights(0.7, 0.3, 0.5)),
    ("4g", FusionWeights(0.9, 0.1, 0.5)),
)

SCENARIO_KINDS = ("simple", "general", "degenerate")
FIXTURE_KINDS = ("simultaneous", "base") + SCENARIO_KINDS

SWEEP_HEADER = ("alpha", "delta", "gamma", "mean_delta_d", "mean_l2_err", "win_rate", "n")


def trial_seed(base: int, index: int) -> int:
    """Per-trial seed: first 8 bytes (little endian) of BLAKE2b("<base>:<index>")."""
    digest = hashlib.blake2b(f"{base}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ------------------------------------------------------------------ trials


@dataclass(frozen=True)
class TrialRecord:
    index: int
    seed: int
    winner: str
    t_f: float
    delta_d_terminal: float
    delta_d_mean: float
    mean_l2_err: float
    steps: int
    hold_steps: int
    error: Optional[str] = None

    @property
    def aborted(self) -> bool:
        return self.error is not None


def _mean(values: Iterable[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    # fsum is correctly rounded, so the mean is independent of trial order
    return math.fsum(vals) / len(vals) if vals else math.nan


@dataclass
class TrialStats:
    records: list[TrialRecord]
    results: Optional[list[Optional[GameResult]]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def completed(self) -> list[TrialRecord]:
        return [r for r in self.records if not r.aborted]

    @property
    def n_aborted(self) -> int:
        return self.n - len(self.completed)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) if not r.aborted else math.nan for r in self.records])

    @property
    def mean_delta_d(self) -> float:
        return _mean(r.delta_d_terminal for r in self.completed)

    @property
    def mean_delta_d_avg(self) -> float:
        return _mean(r.delta_d_mean for r in self.completed)

    @property
    def mean_l2_err(self) -> float:
        return _mean(r.mean_l2_err for r in self.completed)

    @property
    def win_rate(self) -> float:
        done = self.completed
        return math.fsum(r.winner == DEFENDER for r in done) / len(done) if done else math.nan

    def summary(self) -> dict:
        return {
            "n": self.n,
            "n_aborted": self.n_aborted,
            "mean_delta_d": self.mean_delta_d,
            "mean_delta_d_avg": self.mean_delta_d_avg,
            "mean_l2_err": self.mean_l2_err,
            "win_rate": self.win_rate,
        }


def _play_trial(job: tuple[int, GameConfig, bool]) -> tuple[TrialRecord, Optional[GameResult]]:
    index, cfg, keep = job
    try:
        res = play(cfg)
    except GameAbortError as exc:
        nan = math.nan
        return TrialRecord(index, cfg.seed, "aborted", nan, nan, nan, nan, 0, 0, str(exc)), None
    rec = TrialRecord(
        index, cfg.seed, res.winner, res.t_f, res.delta_d_terminal, res.delta_d_mean,
        res.mean_estimate_error, res.steps, res.hold_steps,
    )
    return rec, (res if keep else None)


def _map(func: Callable, jobs_list: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(jobs_list) <= 1:
        return [func(j) for j in jobs_list]
    chunk = max(1, len(jobs_list) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, jobs_list, chunksize=chunk))


def run_configs(configs: Sequence[GameConfig], *, jobs: int = 1, keep_results: bool = False) -> TrialStats:
    """Play prepared configs (seeds already set), aggregated in index order."""
    out = _map(_play_trial, [(i, c, keep_results) for i, c in enumerate(configs)], jobs)
    records = [rec for rec, _ in out]
    return TrialStats(records, [res for _, res in out] if keep_results else None)


def run_trials(
    cfg: GameConfig,
    n: int,
    seed: int = 0,
    *,
    fixtures: Optional[Sequence[GameConfig]] = None,
    jobs: int = 1,
    keep_results: bool = False,
) -> TrialStats:
    """``n`` games seeded ``trial_seed(seed, i)``; starting from ``fixtures[i]``
    when given, otherwise all from ``cfg``."""
    if n < 1:
        raise ValueError("need at least one trial")
    if fixtures is not None and len(fixtures) < n:
        raise ValueError(f"{len(fixtures)} fixtures for {n} trials")
    configs = [
        replace(fixtures[i] if fixtures is not None else cfg, seed=trial_seed(seed, i))
        for i in range(n)
    ]
    return run_configs(configs, jobs=jobs, keep_results=keep_results)


# ---------------------------------------------------------------- fixtures


def _arrival_gap(psi: float, phi: float, r: float, nu: float, ratio: float, cfg: GameConfig) -> float:
    # defender arc minus `ratio` times the distance it could cover while the intruder arrives
    z = RelativeState(psi, phi, r, nu)
    th = solve_breaching(z, cfg.solver).theta_star
    return geodesic_arc(DefenderState(0.0, phi), th) - ratio * planar_distance(IntruderState(psi, r), th, 0.0) / nu


def simultaneous_arrival_fixtures(
    base: GameConfig,
    n: int,
    seed: int = 0,
    *,
    arrival_ratio: float = 1.0,
    phi_range: tuple[float, float] = (0.05, 1.5),
    nu_range: tuple[float, float] = (0.3, 1.0),
    r_range: tuple[float, float] = (1.05, 6.0),
) -> list[GameConfig]:
    """Starts where, with perfect play, the defender needs ``arrival_ratio``
    times the intruder's time to reach the optimal breaching point.

    ``psi``, ``phi`` and ``nu`` are sampled; ``r`` is root-found so the
    arrival-time ratio holds (ratio 1 puts both on the breaching point at
    the same instant).
    """
    rng = random.Random(trial_seed(seed, -1))
    out: list[GameConfig] = []
    while len(out) < n:
        psi = rng.uniform(-math.pi, math.pi)
        phi = rng.uniform(*phi_range)
        nu = rng.uniform(*nu_range)
        lo, hi = r_range
        g_lo = _arrival_gap(psi, phi, lo, nu, arrival_ratio, base)
        g_hi = _arrival_gap(psi, phi, hi, nu, arrival_ratio, base)
        if g_lo * g_hi > 0.0:
            continue
        r = brentq(lambda x: _arrival_gap(psi, phi, x, nu, arrival_ratio, base), lo, hi, xtol=1e-14)
        d = DefenderState(base.defender.psi_d, phi)
        a = IntruderState(base.defender.psi_d + psi, r)
        out.append(replace(base, defender=d, intruder=a, nu=nu, static_position=None,
                           static_gaze=None, seed=trial_seed(seed, len(out))))
    return out


def initially_visible(cfg: GameConfig) -> bool:
    """Both cameras see the intruder at the start (gazes as the game sets them)."""
    a = intruder_to_world(cfg.intruder)
    dpos = defender_to_world(cfg.defender)
    gaze = math.atan2(a.y - dpos.y, a.x - dpos.x)
    sp = cfg.static_position or default_static_position(cfg.defender, cfg.intruder)
    sgaze = cfg.static_gaze if cfg.static_gaze is not None else math.atan2(a.y - sp[1], a.x - sp[0])
    for pose in (defender_camera_pose(cfg.defender, gaze), level_camera_pose(sp, sgaze)):
        c = world_to_camera(pose, a)
        if not c[1] > 0.0 or not in_fov(cfg.intrinsics, project(cfg.intrinsics, c)):
            return False
    return True


def scenario_suite(kind: str, base: GameConfig, n: int = 1, seed: int = 0) -> list[GameConfig]:
    """Start configurations for the simple / general / degenerate scenarios.

    simple: defender and intruder share an azimuth; degenerate: the defender
    starts on the base plane; general: random ``psi``, ``phi`` and ``r``.
    Samples where either camera cannot see the intruder at the start are
    redrawn.
    """
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    rng = random.Random(trial_seed(seed, -1))
    psi_d = base.defender.psi_d
    out: list[GameConfig] = []
    while len(out) < n:
        r = rng.uniform(1.2, 3.0)
        if kind == "simple":
            psi, phi = 0.0, rng.uniform(0.0, HALF_PI)
        elif kind == "degenerate":
            psi, phi = rng.uniform(-math.pi, math.pi), 0.0
        else:
            psi, phi = rng.uniform(-math.pi, math.pi), rng.uniform(0.0, HALF_PI)
        if r <= 1.0 + base.breach_epsilon or (kind != "degenerate" and phi == 0.0):
            continue
        cfg = replace(
            base,
            defender=DefenderState(psi_d, phi),
            intruder=IntruderState(psi_d + psi, r),
            static_position=None,
            static_gaze=None,
            seed=trial_seed(seed, len(out)),
        )
        if initially_visible(cfg):
            out.append(cfg)
    return out


def make_fixtures(kind: str, base: GameConfig, n: int, seed: int = 0) -> list[GameConfig]:
    if kind == "simultaneous":
        return simultaneous_arrival_fixtures(base, n, seed)
    if kind == "base":
        return [replace(base, seed=trial_seed(seed, i)) for i in range(n)]
    return scenario_suite(kind, base, n, seed)


# ------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    weights: tuple[tuple[str, FusionWeights], ...] = ABLATION_GRID
    trials: int = 100
    base: GameConfig = GameConfig()
    seed: int = 0
    fixtures: str = "simultaneous"

    def __post_init__(self) -> None:
        if not self.weights:
            raise ValueError("sweep needs at least one weight triple")
        if self.trials < 1:
            raise ValueError("sweep needs at least one trial per triple")
        if self.fixtures not in FIXTURE_KINDS:
            raise ValueError(f"unknown fixture kind {self.fixtures!r}")


@dataclass
class SweepRow:
    label: str
    weights: FusionWeights
    stats: TrialStats

    def csv_row(self) -> list[str]:
        w, s = self.weights, self.stats
        return [repr(w.alpha), repr(w.delta), repr(w.gamma), repr(s.mean_delta_d),
                repr(s.mean_l2_err), repr(s.win_rate), str(s.n)]


def ablation_sweep(spec: SweepSpec, *, jobs: int = 1, keep_results: bool = False) -> list[SweepRow]:
    """One row per weight triple, in the given order.  Every row replays the
    same fixtures and seeds, so only the weights differ between rows."""
    fixtures = make_fixtures(spec.fixtures, spec.base, spec.trials, spec.seed)
    configs = [
        replace(fx, weights=w, perception_mode=MULTIVIEW)
        for _, w in spec.weights
        for fx in fixtures
    ]
    stats = run_configs(configs, jobs=jobs, keep_results=keep_results)
    rows = []
    for k, (label, w) in enumerate(spec.weights):
        lo, hi = k * spec.trials, (k + 1) * spec.trials
        recs = [replace(r, index=r.index - lo) for r in stats.records[lo:hi]]
        res = stats.results[lo:hi] if stats.results is not None else None
        rows.append(SweepRow(label, w, TrialStats(recs, res)))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow(row.csv_row())
    return out.getvalue()


# ---------------------------------------------------------- mode comparison


@dataclass
class ModeComparison:
    stats: dict[str, TrialStats]

    def paired_differences(self, metric: str, a: str, b: str) -> np.ndarray:
        """Per-fixture ``metric(a) - metric(b)``; fixtures where either side
        is undefined are dropped."""
        d = self.stats[a].column(metric) - self.stats[b].column(metric)
        return d[~np.isnan(d)]

    def paired_summary(self, metric: str, a: str, b: str) -> tuple[float, float, int]:
        """Mean paired difference, its standard error and the pair count."""
        d = self.paired_differences(metric, a, b)
        if len(d) < 2:
            return (float(d.mean()) if len(d) else math.nan, math.nan, len(d))
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(len(d))), len(d)


def compare_modes(
    fixtures: Sequence[GameConfig],
    modes: Sequence[str],
    *,
    jobs: int = 1,
    keep_results: bool = False,
) -> ModeComparison:
    """Run the same fixtures (same seeds, hence the same per-view noise
    draws) under each perception mode."""
    configs = [replace(fx, perception_mode=m) for m in modes for fx in fixtures]
    stats = run_configs(configs, jobs=jobs, keep_results=keep_results)
    n = len(fixtures)
    out = {}
    for k, m in enumerate(modes):
        recs = [replace(r, index=r.index - k * n) for r in stats.records[k * n:(k + 1) * n]]
        res = stats.results[k * n:(k + 1) * n] if stats.results is not None else None
        out[m] = TrialStats(recs, res)
    return ModeComparison(out)


def write_trial_files(stats: TrialStats, directory) -> None:
    """``trial_<index>.csv`` trajectories for every completed trial."""
    if stats.results is None:
        raise ValueError("trial results were not kept")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec, res in zip(stats.records, stats.results):
        if res is not None:
            (directory / f"trial_{rec.index}.csv").write_text(res.trajectory_csv(), encoding="utf-8")


def trials_csv(stats: TrialStats) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["index", "seed", "winner", "t_f", "delta_d_terminal", "delta_d_mean",
                "mean_l2_err", "steps", "hold_steps"])
    for r in stats.records:
        w.writerow([r.index, r.seed, r.winner, repr(r.t_f), repr(r.delta_d_terminal),
                    repr(r.delta_d_mean), repr(r.mean_l2_err), r.steps, r.hold_steps])
    return out.getvalue()


__all__ = [
    "ABLATION_GRID", "GROUND_TRUTH", "ModeComparison", "SweepRow", "SweepSpec", "TrialRecord",
    "TrialStats", "ablation_sweep", "compare_modes", "initially_visible", "make_fixtures",
    "run_configs", "run_trials", "scenario_suite", "simultaneous_arrival_fixtures",
    "sweep_csv", "trial_seed", "trials_csv", "write_trial_files",
]
