"""Acceptance criteria, one test per criterion.

Each test records a one-line detail; ``conftest.py`` prints a PASS/FAIL line
per criterion at the end of the session.
"""

import math
import os
import random
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenarios import OCCLUSION
from perimeter_defense.breaching import solve_breaching, verify_solution
from perimeter_defense.camera import REFERENCE_INTRINSICS as K
from perimeter_defense.camera import (
    ImagePose,
    back_project,
    level_camera_pose,
    project,
    rig_transform,
    world_to_camera,
)
from perimeter_defense.cli import EXIT_OK, main
from perimeter_defense.fusion import DYNAMIC_ONLY, SAMPLE_AVERAGE, FusionWeights, fuse, fused_single_fallback
from perimeter_defense.game import GROUND_TRUTH, MULTIVIEW, SINGLE_VIEW, GameConfig, play
from perimeter_defense.geometry import RelativeState
from perimeter_defense.harness import (
    ABLATION_GRID,
    SweepSpec,
    ablation_sweep,
    compare_modes,
    run_trials,
    scenario_suite,
    simultaneous_arrival_fixtures,
)
from perimeter_defense.perception import CAMERA_REALISTIC_NOISE, DEFAULT_NOISE, Detection

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
JOBS = os.cpu_count() or 1

pytestmark = pytest.mark.slow


def detail(record_property, text: str) -> None:
    record_property("detail", text)


@pytest.mark.criterion(1, "breaching residuals over 1e4 random states")
def test_breaching_residuals(record_property):
    rng = random.Random(20240601)
    states = [
        RelativeState(rng.uniform(-math.pi, math.pi), rng.uniform(0.0, math.pi / 2),
                      rng.uniform(1.01, 10.0), 1.0 - rng.uniform(0.0, 0.95))
        for _ in range(10**4)
    ]
    t0 = time.perf_counter()
    sols = [solve_breaching(z) for z in states]
    elapsed = time.perf_counter() - t0
    worst = max(max(verify_solution(s, z)) for s, z in zip(sols, states))
    gaps = sum(s.theta_bracket[0] != s.theta_bracket[1] for s in sols)
    detail(record_property, f"max residual {worst:.2e}, {elapsed:.2f} s, {gaps} jump solutions")
    assert worst <= 1e-9
    assert elapsed < 5.0


@pytest.mark.criterion(2, "trivial fixed points")
def test_fixed_points(record_property):
    rng = random.Random(2)
    worst_sym = 0.0
    for _ in range(100):
        z = RelativeState(0.0, rng.uniform(0.0, math.pi / 2), rng.uniform(1.01, 10.0), rng.uniform(0.05, 1.0))
        s = solve_breaching(z)
        worst_sym = max(worst_sym, abs(s.theta_star), abs(s.beta_star - math.pi / 2))
    worst_slow = 0.0
    for _ in range(100):
        z = RelativeState(rng.uniform(-math.pi, math.pi), rng.uniform(0.0, math.pi / 2),
                          rng.uniform(1.01, 10.0), 0.001)
        worst_slow = max(worst_slow, abs(solve_breaching(z).theta_star - z.psi))
    detail(record_property, f"psi=0 error {worst_sym:.1e}, nu=0.001 max |theta*-psi| {worst_slow:.2e}")
    assert worst_sym <= 1e-12
    assert worst_slow <= 1e-2


@pytest.mark.criterion(3, "camera round trip")
def test_camera_round_trip(record_property):
    rng = np.random.default_rng(3)
    u = rng.uniform(0, K.width, 10**4)
    v = rng.uniform(0, K.height, 10**4)
    y = rng.uniform(0.01, 100.0, 10**4)
    worst = 0.0
    for a, b, c in zip(u, v, y):
        ip = project(K, back_project(K, ImagePose(a, b, c)))
        worst = max(worst, abs(ip.u - a), abs(ip.v - b), abs(ip.y_c - c))
    on_axis = project(K, (0.0, 7.25, 0.0))
    detail(record_property, f"max round-trip error {worst:.1e}")
    assert worst <= 1e-10
    assert on_axis == ImagePose(320.0, 180.0, 7.25)


@pytest.mark.criterion(4, "perfect-perception equilibrium")
def test_equilibrium(record_property):
    base = GameConfig(perception_mode=GROUND_TRUTH)
    t0 = time.perf_counter()
    fixtures = simultaneous_arrival_fixtures(base, 100, seed=0)
    stats = run_trials(base, 100, fixtures=fixtures)
    elapsed = time.perf_counter() - t0
    dd = np.abs(stats.column("delta_d_terminal"))
    bound = 2 * base.v_d * base.dt
    detail(record_property, f"max |dd| {np.max(dd):.4f} (bound {bound}), {elapsed:.1f} s")
    assert stats.n_aborted == 0
    assert np.all(dd <= bound)
    assert elapsed < 30.0


unit = st.floats(0.0, 1.0)
vec = st.tuples(*[st.floats(-1e3, 1e3)] * 3)


@settings(max_examples=2000)
@given(vec, vec, unit, unit, unit, st.floats(0.5, 8.0), st.floats(-1.2, 1.2))
def check_fusion_algebra(p1, p2, a, d, g, dist, az):
    w = FusionWeights(a, d, g)
    assert np.array_equal(fuse(p1, p2, DYNAMIC_ONLY), np.asarray(p1, dtype=float))
    mid = fuse(p1, p2, SAMPLE_AVERAGE)
    assert np.allclose(mid, (np.asarray(p1) + np.asarray(p2)) / 2, rtol=1e-15, atol=1e-12)
    out = fuse(p1, p2, w)
    for o, x, y in zip(out, p1, p2):
        assert min(x, y) - 1e-9 <= o <= max(x, y) + 1e-9
    # noiseless two-view agreement
    truth = np.array([dist * math.cos(az), dist * math.sin(az), 0.0])
    dyn = level_camera_pose((0.0, 0.0, 0.8), az)
    sta = level_camera_pose(truth + (2.0 * math.sin(az), -2.0 * math.cos(az), 0.5), az + math.pi / 2)
    T = rig_transform(dyn, sta)
    d1 = Detection(project(K, world_to_camera(dyn, truth)))
    d2 = Detection(project(K, world_to_camera(sta, truth)), "static")
    fused = fused_single_fallback(d1, d2, T, w, K)
    assert np.allclose(fused, world_to_camera(dyn, truth), atol=1e-9)


@pytest.mark.criterion(5, "fusion algebra")
def test_fusion_algebra(record_property):
    detail(record_property, "identity, midpoint, convexity, agreement over 2000 examples")
    check_fusion_algebra()


@pytest.mark.criterion(6, "multiview lowers L2 error and delta-d")
def test_multiview_improvement(record_property):
    base = GameConfig(noise=DEFAULT_NOISE)
    t0 = time.perf_counter()
    fixtures = scenario_suite("general", base, 500, seed=0)
    cmp = compare_modes(fixtures, [SINGLE_VIEW, MULTIVIEW], jobs=JOBS)
    elapsed = time.perf_counter() - t0
    l2, l2_se, n = cmp.paired_summary("mean_l2_err", MULTIVIEW, SINGLE_VIEW)
    dd, dd_se, n_dd = cmp.paired_summary("delta_d_terminal", MULTIVIEW, SINGLE_VIEW)
    detail(record_property,
           f"L2 diff {l2:+.4f} +/- {l2_se:.4f} (n={n}); dd diff {dd:+.4f} +/- {dd_se:.4f} "
           f"(n={n_dd}); {elapsed:.0f} s")
    assert n >= 500 and n_dd >= 500
    assert l2 < -2 * l2_se
    assert dd < -2 * dd_se
    assert elapsed < 300.0


@pytest.mark.criterion(7, "ablation ordering under camera-realistic noise")
def test_ablation_ordering(record_property):
    base = GameConfig(noise=CAMERA_REALISTIC_NOISE)
    rows = ablation_sweep(SweepSpec(ABLATION_GRID, 500, base, seed=0), jobs=JOBS)
    by = {r.label: r.stats for r in rows}
    diff = by["2c"].column("delta_d_terminal") - by["2a"].column("delta_d_terminal")
    diff = diff[~np.isnan(diff)]
    se = diff.std(ddof=1) / math.sqrt(len(diff))
    best = min(rows, key=lambda r: r.stats.mean_delta_d)
    detail(record_property,
           f"2c-2a {diff.mean():+.4f} +/- {se:.4f} (n={len(diff)}); best {best.label} "
           f"{best.stats.mean_delta_d:.4f} vs 4e {by['4e'].mean_delta_d:.4f}")
    assert len(diff) >= 500
    assert by["2c"].mean_delta_d < by["2a"].mean_delta_d
    assert best.stats.mean_delta_d < by["4e"].mean_delta_d


@pytest.mark.criterion(8, "hold on FOV loss")
def test_fov_loss(record_property):
    outcomes = []
    for seed in range(30):
        single = play(replace(OCCLUSION, perception_mode=SINGLE_VIEW, seed=seed))
        multi = play(replace(OCCLUSION, perception_mode=MULTIVIEW, seed=seed))
        outcomes.append((single.hold_steps, single.delta_d_terminal, multi.delta_d_terminal))
    ok = [h >= 1 and s > m for h, s, m in outcomes]
    h0, s0, m0 = outcomes[0]
    detail(record_property, f"seed 0: {h0} holds, dd single {s0:.3f} vs multiview {m0:.3f}; "
                            f"{sum(ok)}/30 seeds")
    assert all(ok)


@pytest.mark.criterion(9, "CLI determinism")
def test_cli_determinism(record_property, tmp_path):
    def tree(path: Path) -> dict:
        return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}

    manifests = [
        ("run", "default.cfg", []),
        ("sweep", "ablation_sweep.cfg", ["--set", "sweep.trials=3", "--set", "sweep.trial_files=true"]),
        ("scenarios", "scenarios_general.cfg", ["--set", "scenario.trials=6"]),
    ]
    checked = 0
    for cmd, cfg, extra in manifests:
        outs = []
        for i, jobs in enumerate(("1", "1", "8")):
            out = tmp_path / f"{cmd}_{i}"
            rc = main([cmd, "--config", str(CONFIGS / cfg), "--out", str(out), "--seed", "11",
                       "--jobs", jobs] + extra)
            assert rc == EXIT_OK
            outs.append(tree(out))
        assert outs[0] == outs[1] == outs[2]
        checked += len(outs[0])
    detail(record_property, f"{checked} files byte-identical across reruns and --jobs 8")
