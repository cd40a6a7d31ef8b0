"""Command-line front end.

Subcommands:

* ``run`` — execute one configured experiment point; writes
  ``transcript.jsonl``, ``metrics.csv``, ``summary.json``.
* ``sweep`` — repeat the experiment over a parameter grid; writes
  ``metrics.csv``, ``summary.json``, and a figure.
* ``attack-sweep`` — detection probability or eavesdropper information
  across an attack suite (or one attack parameter grid).
* ``capacity-table`` — the dense-coding capacity closed form on a grid.

Exit codes: 0 success, 2 configuration/validation error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import load_config, load_preset, preset_names, validate_config
from .errors import ConfigError, SimulationError
from .runner import (
    collect,
    collect_attack_sweep,
    collect_capacity,
    collect_sweep,
    write_csv,
    write_summary,
    write_transcripts,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="path to a JSON scenario config")
    parser.add_argument("--preset", help="name of a shipped preset config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--no-plot", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvcqd",
        description="Simulator for supervised continuous-variable dialogue and private comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "execute one experiment point"),
        ("sweep", "sweep a numeric parameter"),
        ("attack-sweep", "evaluate an attack suite"),
        ("capacity-table", "tabulate the dense-coding capacity"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--param", help="dotted parameter path (overrides config sweep)")
            p.add_argument("--grid", help="comma-separated numeric grid")
    lp = sub.add_parser("presets", help="list shipped preset names")
    lp.add_argument("--out", type=Path, default=None, help=argparse.SUPPRESS)
    return parser


def _load(args) -> dict:
    if args.config is not None and args.preset is not None:
        raise ConfigError("config", "give either --config or --preset, not both")
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset is not None:
        cfg = load_preset(args.preset)
    else:
        cfg = validate_config({})
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["trials"] = args.trials
    if getattr(args, "param", None) is not None:
        grid_text = getattr(args, "grid", None)
        if not grid_text:
            raise ConfigError("sweep.grid", "--param needs --grid")
        try:
            grid = [float(v) for v in grid_text.split(",") if v.strip() != ""]
        except ValueError as exc:
            raise ConfigError("sweep.grid", f"non-numeric grid entry: {exc}") from exc
        if not grid:
            raise ConfigError("sweep.grid", "grid is empty")
        cfg["sweep"] = {"parameter": args.param, "grid": grid}
        cfg = validate_config(cfg)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = collect(cfg)
    write_csv(out / "metrics.csv", result.rows, f"cvcqd.{cfg['experiment']}.v1")
    write_transcripts(out / "transcript.jsonl", result.transcripts)
    write_summary(out / "summary.json", cfg, result.aggregate, time.perf_counter() - t0)
    for key, value in result.aggregate.items():
        print(f"{key}: {value}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg["sweep"] is None:
        raise ConfigError("sweep", "sweep needs a 'sweep' config section or --param/--grid")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = collect_sweep(cfg)
    write_csv(out / "metrics.csv", rows, "cvcqd.sweep.v1")
    write_summary(out / "summary.json", cfg, {"points": len(rows)}, time.perf_counter() - t0)
    if not args.no_plot:
        from .plots import plot_sweep

        plot_sweep(rows, out / "sweep.png")
    print(f"{len(rows)} sweep points -> {out / 'metrics.csv'}")
    return 0


def _cmd_attack_sweep(args) -> int:
    cfg = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = collect_attack_sweep(cfg)
    write_csv(out / "metrics.csv", rows, f"cvcqd.attack-{cfg['attack_metric']}.v1")
    write_summary(out / "summary.json", cfg, {"points": len(rows)}, time.perf_counter() - t0)
    if not args.no_plot:
        from .plots import plot_attack_sweep

        plot_attack_sweep(rows, out / "attacks.png")
    for row in rows:
        print("  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
    return 0


def _fmt(value) -> str:
    try:
        return f"{float(value):.6g}"
    except (TypeError, ValueError):
        return str(value)


def _cmd_capacity(args) -> int:
    cfg = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    rows = collect_capacity(cfg)
    write_csv(out / "metrics.csv", rows, "cvcqd.capacity.v1")
    write_summary(out / "summary.json", cfg, {"points": len(rows)})
    if not args.no_plot:
        from .plots import plot_capacity

        plot_capacity(rows, out / "capacity.png")
    for row in rows:
        print("  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in preset_names():
                print(name)
            return 0
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "attack-sweep":
            return _cmd_attack_sweep(args)
        if args.command == "capacity-table":
            return _cmd_capacity(args)
        raise ConfigError("command", f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
