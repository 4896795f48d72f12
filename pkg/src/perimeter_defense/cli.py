"""Command-line front end.

    perimeter-defense run --config configs/default.cfg --out runs/demo

Exit codes: 0 success, 2 configuration error, 3 solver abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, attach_replay, format_value, parse_config
from .game import GameAbortError, GameResult, play
from .harness import (
    ModeComparison,
    ablation_sweep,
    compare_modes,
    scenario_suite,
    sweep_csv,
    trials_csv,
    write_trial_files,
)
from .perception import MalformedLogError, format_detection_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

COMMANDS = ("run", "sweep", "scenarios", "replay")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="perimeter-defense",
        description="Vision-based hemisphere perimeter defense simulator.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path, help="run configuration file")
    p.add_argument("--out", help="output directory (run.out)")
    p.add_argument("--seed", type=int, help="base seed (game.seed)")
    p.add_argument("--jobs", type=int, help="worker processes (run.jobs)")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory (run.force)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key; repeatable")
    return p


def _summary_text(items: Sequence[tuple[str, object]]) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in items)


def _game_summary(command: str, cfg: RunConfig, res: GameResult) -> list[tuple[str, object]]:
    s = res.summary()
    return [("command", command), ("seed", cfg.seed)] + list(s.items())


def _check_out_dir(out: Path, force: bool) -> None:
    if out.exists():
        if not out.is_dir():
            raise OSError(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise FileExistsError(f"{out} is not empty; pass --force to write into it")


def _write(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _run_game(command: str, cfg: RunConfig, out: Path) -> None:
    res = play(cfg.game)
    files = {
        "trajectory.csv": res.trajectory_csv(),
        "summary.txt": _summary_text(_game_summary(command, cfg, res)),
    }
    if command == "run":
        files["detections.csv"] = format_detection_log(res.detection_entries())
    _write(out, files)


def _run_sweep(cfg: RunConfig, out: Path) -> None:
    rows = ablation_sweep(cfg.sweep, jobs=cfg.jobs, keep_results=cfg.trial_files)
    items: list[tuple[str, object]] = [("command", "sweep"), ("seed", cfg.seed),
                                       ("trials", cfg.sweep.trials), ("rows", len(rows))]
    for row in rows:
        s = row.stats
        items += [
            (f"row.{row.label}.weights", (row.weights.alpha, row.weights.delta, row.weights.gamma)),
            (f"row.{row.label}.mean_delta_d", s.mean_delta_d),
            (f"row.{row.label}.mean_delta_d_avg", s.mean_delta_d_avg),
            (f"row.{row.label}.mean_l2_err", s.mean_l2_err),
            (f"row.{row.label}.win_rate", s.win_rate),
            (f"row.{row.label}.n_aborted", s.n_aborted),
        ]
    ranked = [r for r in rows if not math.isnan(r.stats.mean_delta_d)]
    if ranked:
        best = min(ranked, key=lambda r: r.stats.mean_delta_d)
        items.append(("best", best.label))
    _write(out, {"sweep.csv": sweep_csv(rows), "summary.txt": _summary_text(items)})
    if cfg.trial_files:
        for row in rows:
            write_trial_files(row.stats, out / f"row_{row.label}")


def _run_scenarios(cfg: RunConfig, out: Path) -> None:
    spec = cfg.scenario
    fixtures = scenario_suite(spec.kind, cfg.game, spec.trials, cfg.seed)
    cmp: ModeComparison = compare_modes(fixtures, spec.modes, jobs=cfg.jobs, keep_results=True)
    items: list[tuple[str, object]] = [("command", "scenarios"), ("seed", cfg.seed),
                                       ("kind", spec.kind), ("trials", spec.trials)]
    files = {}
    for mode in spec.modes:
        stats = cmp.stats[mode]
        items += [(f"{mode}.{k}", v) for k, v in stats.summary().items()]
        files[f"trials_{mode}.csv"] = trials_csv(stats)
    for i, a in enumerate(spec.modes):
        for b in spec.modes[i + 1:]:
            for metric in ("delta_d_terminal", "mean_l2_err"):
                mean, se, n = cmp.paired_summary(metric, b, a)
                items += [(f"paired.{b}-{a}.{metric}.mean", mean),
                          (f"paired.{b}-{a}.{metric}.se", se),
                          (f"paired.{b}-{a}.{metric}.n", n)]
    files["summary.txt"] = _summary_text(items)
    _write(out, files)
    for mode in spec.modes:
        write_trial_files(cmp.stats[mode], out / mode)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    err = sys.stderr
    try:
        text = args.config.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=err)
        return EXIT_IO

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"game.seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"run.jobs={args.jobs}")
    if args.out is not None:
        overrides.append(f"run.out={args.out}")
    if args.force:
        overrides.append("run.force=true")
    try:
        cfg = parse_config(text, overrides, base_dir=args.config.resolve().parent)
        if cfg.out is None:
            raise ConfigError("no output directory; pass --out or set run.out")
        if args.command == "replay":
            cfg = attach_replay(cfg)
    except (ConfigError, MalformedLogError) as exc:
        print(f"error: {args.config}: {exc}", file=err)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read detection log: {exc}", file=err)
        return EXIT_IO

    out = Path(cfg.out)
    try:
        _check_out_dir(out, cfg.force)
        if args.command in ("run", "replay"):
            _run_game(args.command, cfg, out)
        elif args.command == "sweep":
            _run_sweep(cfg, out)
        else:
            _run_scenarios(cfg, out)
    except GameAbortError as exc:
        print(f"error: game aborted: {exc}", file=err)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
