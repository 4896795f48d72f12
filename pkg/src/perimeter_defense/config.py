"""Flat ``section.key = value`` run configuration.

One setting per line; ``#`` starts a comment.  Numeric values accept a
small arithmetic subset (numbers, ``pi``, ``+ - * /`` and parentheses), so
``game.phi_d = pi / 4`` works.  Lists use ``;`` between items and
whitespace inside an item, e.g. ``sweep.weights = 0.9 0.1 0.1; 0.5 0.5 0.5``.

Every key has a default (see :data:`KEYS`); unknown keys are rejected.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .breaching import SolverConfig
from .camera import CameraIntrinsics
from .fusion import FusionWeights
from .game import INTRUDER_STRATEGIES, PERCEPTION_MODES, GameConfig, ReplaySource
from .geometry import DefenderState, IntruderState
from .harness import FIXTURE_KINDS, SCENARIO_KINDS, ABLATION_GRID, SweepSpec
from .perception import NOISE_PRESETS, NoiseModel, load_detection_log


class ConfigError(ValueError):
    """Bad configuration text or value; carries the location when known."""

    def __init__(self, message: str, *, line: Optional[int] = None,
                 column: Optional[int] = None, key: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
            if column is not None:
                where.append(f"column {column}")
        prefix = ", ".join(where)
        if key is not None:
            prefix = f"{prefix}: {key}" if prefix else key
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line, self.column, self.key = line, column, key


# ----------------------------------------------------------- value parsers

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_NAMES = {"pi": math.pi, "inf": math.inf}


def _eval(node: ast.AST) -> float:
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    raise ValueError("not a number")


def parse_number(text: str) -> float:
    try:
        return _eval(ast.parse(text.strip(), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ValueError(f"expected a number, got {text.strip()!r}") from None


def parse_int(text: str) -> int:
    s = text.strip()
    if not re.fullmatch(r"[+-]?\d+", s):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(s)


def parse_bool(text: str) -> bool:
    s = text.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {text.strip()!r}")


def parse_string(text: str) -> str:
    s = text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1]
    return s


def parse_tuples(text: str, width: int) -> tuple[tuple[float, ...], ...]:
    items = [item.strip() for item in text.split(";") if item.strip()]
    out = []
    for item in items:
        parts = item.replace(",", " ").split()
        if len(parts) != width:
            raise ValueError(f"expected {width} numbers per item, got {item!r}")
        out.append(tuple(parse_number(p) for p in parts))
    return tuple(out)


def parse_optional_point(text: str) -> Optional[tuple[float, float, float]]:
    if text.strip().lower() == "auto":
        return None
    pts = parse_tuples(text, 3)
    if len(pts) != 1:
        raise ValueError("expected three numbers or 'auto'")
    return pts[0]


def parse_optional_number(text: str) -> Optional[float]:
    return None if text.strip().lower() == "auto" else parse_number(text)


def _choice(options: Iterable[str]) -> Callable[[str], str]:
    options = tuple(options)

    def parse(text: str) -> str:
        s = parse_string(text)
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


def _modes(text: str) -> tuple[str, ...]:
    modes = tuple(m.strip() for m in re.split(r"[;,\s]+", text) if m.strip())
    if not modes:
        raise ValueError("expected at least one perception mode")
    for m in modes:
        if m not in PERCEPTION_MODES:
            raise ValueError(f"unknown perception mode {m!r}")
    return modes


# ------------------------------------------------------------------ bounds


def _range(lo: float, hi: float, lo_open: bool = False, hi_open: bool = False):
    def check(x: float) -> Optional[str]:
        ok_lo = x > lo if lo_open else x >= lo
        ok_hi = x < hi if hi_open else x <= hi
        if ok_lo and ok_hi:
            return None
        return f"must lie in {'(' if lo_open else '['}{lo:g}, {hi:g}{')' if hi_open else ']'}, got {x!r}"
    return check


def _positive(x: float) -> Optional[str]:
    return None if x > 0 else f"must be positive, got {x!r}"


def _non_negative(x: float) -> Optional[str]:
    return None if x >= 0 else f"must be non-negative, got {x!r}"


def _at_least(n: int):
    return lambda x: None if x >= n else f"must be at least {n}, got {x!r}"


def _finite(x: float) -> Optional[str]:
    return None if math.isfinite(x) else f"must be finite, got {x!r}"


@dataclass(frozen=True)
class Key:
    default: Any
    parse: Callable[[str], Any]
    doc: str
    check: Optional[Callable[[Any], Optional[str]]] = None


_G, _K, _N, _S = GameConfig(), CameraIntrinsics(), NoiseModel(), SolverConfig()

KEYS: dict[str, Key] = {
    "game.psi_d": Key(0.0, parse_number, "defender azimuth (rad)", _finite),
    "game.phi_d": Key(math.pi / 4, parse_number, "defender elevation (rad)", _range(0.0, math.pi / 2)),
    "game.psi": Key(0.0, parse_number, "intruder azimuth relative to the defender (rad)", _finite),
    "game.r": Key(2.0, parse_number, "intruder radius (hemisphere radii)", _positive),
    "game.nu": Key(_G.nu, parse_number, "intruder/defender speed ratio", _range(0.0, 1.0, lo_open=True)),
    "game.v_d": Key(_G.v_d, parse_number, "defender speed (radii/s)", _positive),
    "game.dt": Key(_G.dt, parse_number, "time step (s)", _positive),
    "game.max_time": Key(_G.max_time, parse_number, "time limit (s)", _positive),
    "game.perception_mode": Key(_G.perception_mode, _choice(PERCEPTION_MODES), "ground_truth, single_view or multiview"),
    "game.intruder_strategy": Key(_G.intruder_strategy, _choice(INTRUDER_STRATEGIES), "optimal or scripted"),
    "game.waypoints": Key((), lambda s: parse_tuples(s, 2), "scripted waypoints 'x y; x y; ...'"),
    "game.capture_epsilon": Key(_G.capture_epsilon, parse_number, "capture alignment tolerance (rad)", _positive),
    "game.breach_epsilon": Key(_G.breach_epsilon, parse_number, "breach radius margin (radii)", _non_negative),
    "game.static_position": Key(None, parse_optional_point, "static defender 'x y z' or auto"),
    "game.static_gaze": Key(None, parse_optional_number, "static camera azimuth (rad) or auto"),
    "game.seed": Key(0, parse_int, "base seed for all randomness", _non_negative),
    "camera.width": Key(_K.width, parse_int, "image width (px)", _at_least(1)),
    "camera.height": Key(_K.height, parse_int, "image height (px)", _at_least(1)),
    "camera.fov": Key(_K.fov, parse_number, "vertical field of view (deg)", _range(0.0, 180.0, True, True)),
    "camera.f": Key(_K.f, parse_number, "focal length (px)", _positive),
    "camera.u0": Key(_K.u0, parse_number, "principal point u (px)", _finite),
    "camera.v0": Key(_K.v0, parse_number, "principal point v (px)", _finite),
    "noise.preset": Key("default", _choice(NOISE_PRESETS), "default, none or camera_realistic"),
    "noise.sigma_uv": Key(None, parse_number, "pixel noise std (px); overrides the preset", _non_negative),
    "noise.sigma_y": Key(None, parse_number, "depth noise std (radii); overrides the preset", _non_negative),
    "noise.dropout_rate": Key(None, parse_number, "probability of a missed detection", _range(0.0, 1.0)),
    "fusion.alpha": Key(_G.weights.alpha, parse_number, "weight on the dynamic view, camera x", _range(0.0, 1.0)),
    "fusion.delta": Key(_G.weights.delta, parse_number, "weight on the dynamic view, camera y", _range(0.0, 1.0)),
    "fusion.gamma": Key(_G.weights.gamma, parse_number, "weight on the dynamic view, camera z", _range(0.0, 1.0)),
    "solver.tolerance": Key(_S.tolerance, parse_number, "breaching residual tolerance", _positive),
    "solver.max_iterations": Key(_S.max_iterations, parse_int, "bisection iteration cap", _at_least(1)),
    "solver.bracket_expansion": Key(_S.bracket_expansion, parse_int, "bracket doublings", _at_least(0)),
    "sweep.grid": Key("reference", _choice(("reference", "custom")), "reference preset or custom (sweep.weights)"),
    "sweep.weights": Key((), lambda s: parse_tuples(s, 3), "custom triples 'a d g; a d g; ...'"),
    "sweep.trials": Key(100, parse_int, "trials per weight triple", _at_least(1)),
    "sweep.fixtures": Key("simultaneous", _choice(FIXTURE_KINDS), "start-state generator"),
    "sweep.trial_files": Key(False, parse_bool, "write trial_<i>.csv per row"),
    "scenario.kind": Key("general", _choice(SCENARIO_KINDS), "simple, general or degenerate"),
    "scenario.trials": Key(100, parse_int, "fixtures per mode", _at_least(1)),
    "scenario.modes": Key(("single_view", "multiview"), _modes, "perception modes to compare"),
    "replay.log": Key(None, parse_string, "detection log path (relative to the config file)"),
    "replay.staleness": Key(0.1, parse_number, "max detection age (s)", _non_negative),
    "run.out": Key(None, parse_string, "output directory (--out)"),
    "run.jobs": Key(1, parse_int, "worker processes (--jobs)", _at_least(1)),
    "run.force": Key(False, parse_bool, "allow a non-empty output directory (--force)"),
}


# ------------------------------------------------------------------ result


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "general"
    trials: int = 100
    modes: tuple[str, ...] = ("single_view", "multiview")


@dataclass(frozen=True)
class RunConfig:
    game: GameConfig
    sweep: SweepSpec
    scenario: ScenarioSpec
    values: dict
    trial_files: bool = False
    replay_log: Optional[Path] = None
    out: Optional[str] = None
    jobs: int = 1
    force: bool = False

    @property
    def seed(self) -> int:
        return self.game.seed


_LINE = re.compile(r"^(\s*)([^=\s]+)(\s*)=(.*)$")
_KEY = re.compile(r"[a-z_][a-z0-9_]*\.[a-z_][a-z0-9_]*")


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_assignments(text: str) -> dict[str, tuple[str, int, int]]:
    """``key -> (raw value, line, value column)``; syntax errors only."""
    out: dict[str, tuple[str, int, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        m = _LINE.match(line)
        if m is None:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'section.key = value'", line=lineno, column=col)
        key = m.group(2)
        key_col = len(m.group(1)) + 1
        if not _KEY.fullmatch(key):
            raise ConfigError(f"malformed key {key!r}", line=lineno, column=key_col)
        if key not in KEYS:
            raise ConfigError("unknown key", line=lineno, column=key_col, key=key)
        if key in out:
            raise ConfigError(f"duplicate key (first set on line {out[key][1]})",
                              line=lineno, column=key_col, key=key)
        value = m.group(4)
        val_col = m.end(3) + 2 + (len(value) - len(value.lstrip()))
        if not value.strip():
            raise ConfigError("missing value", line=lineno, column=val_col, key=key)
        out[key] = (value.strip(), lineno, val_col)
    return out


def parse_override(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not value.strip():
        raise ConfigError(f"override {item!r} is not key=value")
    if key not in KEYS:
        raise ConfigError("unknown key", key=key)
    return key, value.strip()


def _convert(key: str, raw: str, line: Optional[int], col: Optional[int]) -> Any:
    spec = KEYS[key]
    try:
        value = spec.parse(raw)
    except ValueError as exc:
        raise ConfigError(str(exc), line=line, column=col, key=key) from None
    if spec.check is not None and value is not None:
        problem = spec.check(value)
        if problem:
            raise ConfigError(problem, line=line, column=col, key=key)
    return value


def _build(key_hint: str, factory: Callable, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), key=key_hint) from None


def parse_config(
    text: str,
    overrides: Iterable[str] = (),
    *,
    base_dir: Optional[Path] = None,
) -> RunConfig:
    """Validated run configuration.  ``overrides`` are ``key=value`` items
    applied on top of the file."""
    values = {k: spec.default for k, spec in KEYS.items()}
    for key, (raw, line, col) in parse_assignments(text).items():
        values[key] = _convert(key, raw, line, col)
    for item in overrides:
        key, raw = parse_override(item)
        values[key] = _convert(key, raw, None, None)
    v = values

    intrinsics = _build("camera.f", CameraIntrinsics, v["camera.width"], v["camera.height"],
                        v["camera.fov"], v["camera.f"], v["camera.u0"], v["camera.v0"])
    preset = NOISE_PRESETS[v["noise.preset"]]
    noise = replace(
        preset,
        **{name: v[f"noise.{name}"] for name in ("sigma_uv", "sigma_y", "dropout_rate")
           if v[f"noise.{name}"] is not None},
    )
    weights = FusionWeights(v["fusion.alpha"], v["fusion.delta"], v["fusion.gamma"])
    solver = SolverConfig(v["solver.tolerance"], v["solver.max_iterations"], v["solver.bracket_expansion"])

    replay_log = None
    replay = None
    if v["replay.log"] is not None:
        replay_log = Path(v["replay.log"])
        if base_dir is not None and not replay_log.is_absolute():
            replay_log = Path(base_dir) / replay_log

    r = v["game.r"]
    if not r > 1.0 + v["game.breach_epsilon"]:
        raise ConfigError(f"must exceed 1 + game.breach_epsilon, got {r!r}", key="game.r")
    if v["game.intruder_strategy"] == "scripted" and not v["game.waypoints"]:
        raise ConfigError("scripted intruder needs at least one waypoint", key="game.waypoints")
    game = _build(
        "game",
        GameConfig,
        defender=DefenderState(v["game.psi_d"], v["game.phi_d"]),
        intruder=IntruderState(v["game.psi_d"] + v["game.psi"], r),
        static_position=v["game.static_position"],
        static_gaze=v["game.static_gaze"],
        nu=v["game.nu"],
        v_d=v["game.v_d"],
        dt=v["game.dt"],
        max_time=v["game.max_time"],
        perception_mode=v["game.perception_mode"],
        weights=weights,
        noise=noise,
        intrinsics=intrinsics,
        intruder_strategy=v["game.intruder_strategy"],
        waypoints=v["game.waypoints"],
        capture_epsilon=v["game.capture_epsilon"],
        breach_epsilon=v["game.breach_epsilon"],
        seed=v["game.seed"],
        solver=solver,
        replay=replay,
    )

    if v["sweep.grid"] == "custom":
        if not v["sweep.weights"]:
            raise ConfigError("custom grid needs at least one triple", key="sweep.weights")
        grid = []
        for i, triple in enumerate(v["sweep.weights"], start=1):
            w = _build("sweep.weights", FusionWeights, *triple)
            grid.append((str(i), w))
        grid = tuple(grid)
    else:
        if v["sweep.weights"]:
            raise ConfigError("only used with sweep.grid = custom", key="sweep.weights")
        grid = ABLATION_GRID
    sweep = SweepSpec(grid, v["sweep.trials"], game, v["game.seed"], v["sweep.fixtures"])
    scenario = ScenarioSpec(v["scenario.kind"], v["scenario.trials"], v["scenario.modes"])
    return RunConfig(
        game, sweep, scenario, values,
        trial_files=v["sweep.trial_files"], replay_log=replay_log,
        out=v["run.out"], jobs=v["run.jobs"], force=v["run.force"],
    )


def attach_replay(cfg: RunConfig) -> RunConfig:
    """Load the configured detection log into the game config."""
    if cfg.replay_log is None:
        raise ConfigError("replay needs a detection log", key="replay.log")
    logs = load_detection_log(cfg.replay_log)
    src = ReplaySource(logs["dynamic"], logs["static"], cfg.values["replay.staleness"])
    return replace(cfg, game=replace(cfg.game, replay=src))


def format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "; ".join(" ".join(repr(x) if isinstance(x, float) else str(x) for x in
                                  (item if isinstance(item, tuple) else (item,))) for item in value)
    return str(value)


def defaults_table() -> str:
    """Markdown table of every key, its default and meaning."""
    lines = ["| key | default | meaning |", "|---|---|---|"]
    for key, spec in KEYS.items():
        shown = format_value(spec.default)
        lines.append(f"| `{key}` | {f'`{shown}`' if shown else '(none)'} | {spec.doc} |")
    return "\n".join(lines)
