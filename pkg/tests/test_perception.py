import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perimeter_defense.camera import REFERENCE_INTRINSICS as K
from perimeter_defense.camera import ImagePose, level_camera_pose
from perimeter_defense.perception import (
    CAMERA_REALISTIC_NOISE,
    MIN_DEPTH,
    NOISELESS,
    DEFAULT_NOISE,
    Detection,
    DetectionLog,
    MalformedLogError,
    NoiseModel,
    SyntheticEstimator,
    estimate_to_world,
    format_detection_log,
    make_rng,
    parse_detection_log,
    replay_estimate,
    synthetic_estimate,
)

POSE = level_camera_pose((0.0, 0.0, 1.0), 0.0)
# five units down the optical axis, at the camera's height
AHEAD = (5.0, 0.0, 1.0)


def draw_many(nm: NoiseModel, n: int, seed: int = 0):
    rng = make_rng(seed)
    return [synthetic_estimate(AHEAD, POSE, K, nm, rng) for _ in range(n)]


class TestNoiseModel:
    def test_presets(self):
        assert (DEFAULT_NOISE.sigma_uv, DEFAULT_NOISE.sigma_y) == (6.25, 0.46)
        assert CAMERA_REALISTIC_NOISE.sigma_uv < CAMERA_REALISTIC_NOISE.sigma_y * K.f / 5.0

    @pytest.mark.parametrize("args", [(-1.0, 0.0, 0.0), (0.0, -0.1, 0.0), (0.0, 0.0, 1.5), (0.0, 0.0, -0.1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            NoiseModel(*args)


class TestSyntheticEstimate:
    def test_noiseless_on_axis(self):
        det = synthetic_estimate(AHEAD, POSE, K, NOISELESS, make_rng(1))
        assert det.present and det.pose == ImagePose(320.0, 180.0, 5.0)

    def test_behind_camera(self):
        det = synthetic_estimate((-3.0, 0.0, 1.0), POSE, K, NOISELESS, make_rng(1))
        assert not det.present

    def test_outside_fov(self):
        # horizontal half-angle is atan(320 / 180), about 60.6 degrees
        az = math.atan2(320.0, 180.0) + 0.01
        p = (math.cos(az) * 4, -math.sin(az) * 4, 1.0)
        assert not synthetic_estimate(p, POSE, K, NOISELESS, make_rng(1)).present

    def test_always_four_draws(self):
        a, b = make_rng(5), make_rng(5)
        synthetic_estimate((-3.0, 0.0, 1.0), POSE, K, DEFAULT_NOISE, a)
        synthetic_estimate(AHEAD, POSE, K, DEFAULT_NOISE, b)
        assert a.random() == b.random()

    def test_deterministic(self):
        assert draw_many(DEFAULT_NOISE, 50, seed=9) == draw_many(DEFAULT_NOISE, 50, seed=9)
        assert draw_many(DEFAULT_NOISE, 50, seed=9) != draw_many(DEFAULT_NOISE, 50, seed=10)

    def test_noise_statistics(self):
        dets = draw_many(DEFAULT_NOISE, 10**5, seed=2)
        du = np.array([d.pose.u - 320.0 for d in dets])
        dv = np.array([d.pose.v - 180.0 for d in dets])
        dy = np.array([d.pose.y_c - 5.0 for d in dets])
        half_normal = DEFAULT_NOISE.sigma_uv * math.sqrt(2.0 / math.pi)
        assert np.mean(np.abs(du)) == pytest.approx(half_normal, rel=0.01)
        assert np.mean(np.abs(dv)) == pytest.approx(half_normal, rel=0.01)
        assert np.std(dy, ddof=1) == pytest.approx(0.46, rel=0.03)
        assert abs(np.corrcoef(du, dy)[0, 1]) < 0.02

    @pytest.mark.parametrize("rate", [0.1, 0.5])
    def test_dropout_frequency(self, rate):
        n = 10**5
        dets = draw_many(NoiseModel(0.0, 0.0, rate), n, seed=3)
        missed = sum(not d.present for d in dets)
        sd = math.sqrt(n * rate * (1 - rate))
        assert abs(missed - n * rate) <= 3 * sd

    def test_depth_clamped(self):
        rng = make_rng(4)
        near = (1.02, 0.0, 1.0)
        dets = [synthetic_estimate(near, POSE, K, NoiseModel(0.0, 1.0), rng) for _ in range(2000)]
        assert min(d.pose.y_c for d in dets) == MIN_DEPTH

    @given(st.integers(0, 2**32), st.floats(-1.4, 1.4), st.floats(0.5, 8.0))
    def test_detections_inside_raster(self, seed, az, dist):
        p = (dist * math.cos(az), dist * math.sin(az), 1.0)
        det = synthetic_estimate(p, POSE, K, NoiseModel(50.0, 0.5), make_rng(seed))
        if det.present:
            assert 0 <= det.pose.u < K.width and 0 <= det.pose.v < K.height
            assert det.pose.y_c >= MIN_DEPTH

    def test_estimator_wraps_function(self):
        est = SyntheticEstimator(DEFAULT_NOISE, make_rng(8), "static")
        det = est.detect(AHEAD, POSE, K, 0.0)
        assert det.source == "static"
        assert det == synthetic_estimate(AHEAD, POSE, K, DEFAULT_NOISE, make_rng(8), "static")


class TestEstimateToWorld:
    def test_on_axis(self):
        w = estimate_to_world(ImagePose(320.0, 180.0, 5.0), POSE)
        assert (w.x, w.y, w.z) == pytest.approx((5.0, 0.0, 0.0))

    def test_flattened(self):
        pose = level_camera_pose((1.0, 1.0, 0.5), math.pi / 2)
        w = estimate_to_world(ImagePose(500.0, 90.0, 2.0), pose)
        # x_c = 2, z_c = 1 in a camera looking along +y
        assert (w.x, w.y, w.z) == pytest.approx((3.0, 3.0, 0.0))


LOG = """t,u,v,y_c,source
0.0,100,100,2.0,dynamic
0.05,110,100,2.1,static
0.1,120,100,2.2,dynamic
"""


class TestReplay:
    def test_hold_and_staleness(self):
        logs = parse_detection_log(LOG)
        dyn = logs["dynamic"]
        assert replay_estimate(dyn, -0.01).pose is None
        assert replay_estimate(dyn, 0.0).pose == ImagePose(100, 100, 2.0)
        assert replay_estimate(dyn, 0.09).pose == ImagePose(100, 100, 2.0)
        assert replay_estimate(dyn, 0.1).pose == ImagePose(120, 100, 2.2)
        assert replay_estimate(dyn, 0.25, staleness=0.1).pose is None
        assert replay_estimate(logs["static"], 0.06).source == "static"

    def test_format_parse_round_trip(self):
        entries = [(0.1 * i, Detection(ImagePose(1.0 / 3 + i, 2.0, 0.7 + i), "dynamic")) for i in range(5)]
        entries.append((0.55, Detection(None, "dynamic")))
        log = parse_detection_log(format_detection_log(entries))["dynamic"]
        assert log.times == tuple(t for t, d in entries if d.present)
        assert log.poses == tuple(d.pose for _, d in entries if d.present)

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("", "empty"),
            ("t,u,v,source\n", "header"),
            ("t,u,v,y_c,source\n0,1,2,3\n", "line 2"),
            ("t,u,v,y_c,source\n0,1,x,3,dynamic\n", "line 2"),
            ("t,u,v,y_c,source\n0,1,2,3,other\n", "unknown source"),
            ("t,u,v,y_c,source\n1,1,2,3,dynamic\n0,1,2,3,static\n", "backwards"),
            ("t,u,v,y_c,source\n0,1,2,0,dynamic\n", "positive"),
            ("t,u,v,y_c,source\n0,1,2,3,dynamic\n0,1,2,3,dynamic\n", "strictly increasing"),
        ],
    )
    def test_malformed(self, text, fragment):
        with pytest.raises(MalformedLogError, match=fragment):
            parse_detection_log(text)

    def test_equal_times_across_sources_allowed(self):
        logs = parse_detection_log("t,u,v,y_c,source\n0,1,2,3,dynamic\n0,1,2,3,static\n")
        assert len(logs["dynamic"].times) == len(logs["static"].times) == 1

    def test_log_length_mismatch(self):
        with pytest.raises(MalformedLogError):
            DetectionLog((0.0,), ())
