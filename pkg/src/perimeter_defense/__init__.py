"""Vision-based perimeter defense on a hemisphere.

A dynamic defender on the dome and a static observer estimate an intruder's
position from camera views, fuse the estimates and steer the defender to the
optimal breaching point.
"""

from .breaching import BreachingSolution, SolverConfig, solve_breaching
from .camera import REFERENCE_INTRINSICS, CameraIntrinsics, back_project, project
from .fusion import FusionWeights, fuse, fused_single_fallback
from .game import GameConfig, GameResult, play
from .geometry import DefenderState, IntruderState, RelativeState, relative_state
from .harness import ABLATION_GRID, SweepSpec, ablation_sweep, compare_modes, run_trials, scenario_suite
from .perception import NoiseModel

__version__ = "0.1.0"

__all__ = [
    "BreachingSolution", "CameraIntrinsics", "DefenderState", "FusionWeights", "GameConfig",
    "GameResult", "IntruderState", "NoiseModel", "REFERENCE_INTRINSICS", "RelativeState",
    "SolverConfig", "SweepSpec", "ABLATION_GRID", "ablation_sweep", "back_project",
    "compare_modes", "fuse", "fused_single_fallback", "play", "project", "relative_state",
    "run_trials", "scenario_suite", "solve_breaching",
]
