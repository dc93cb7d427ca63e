"""Command-line interface: run, list-presets, replay."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import apply_overrides, load_config
from .errors import ConfigError, DomainError, StageError
from .presets import PRESET_SUMMARIES, preset_config, preset_names
from .runner import replay, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotwave",
        description="Pilot-wave relaxation experiments for coupled oscillators.",
    )
    parser.add_argument("--version", action="version", version=f"pilotwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset or a config file")
    run_p.add_argument("--preset", help="preset name (see list-presets); wins over a preset key in --config")
    run_p.add_argument("--config", help="flat key=value config file overriding preset fields")
    run_p.add_argument("--scale", choices=("desk", "paper"), help="study size (default desk)")
    run_p.add_argument("--out", help="output directory (default runs/<preset>)")
    run_p.add_argument("--seed", type=int, help="master seed override")
    run_p.add_argument("--workers", type=int, help="worker process count override")

    sub.add_parser("list-presets", help="list available presets")

    rep_p = sub.add_parser("replay", help="re-run a recorded manifest byte-identically")
    rep_p.add_argument("--manifest", required=True, help="path to a manifest.txt")
    rep_p.add_argument("--out", help="output directory (default <original>_replay)")
    return parser


def _cmd_run(args) -> int:
    raw = load_config(args.config) if args.config else {}
    if not args.preset and not args.config:
        print("error [stage:configure] run needs --preset or --config", file=sys.stderr)
        return 2
    name = args.preset or raw.get("preset", "custom")
    scale = args.scale or raw.get("scale", "desk")
    cfg = preset_config(name, scale)
    overrides = {key: val for key, val in raw.items() if key not in ("preset", "scale")}
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    cli_overrides = {}
    if args.out is not None:
        cli_overrides["out_dir"] = args.out
    if args.seed is not None:
        cli_overrides["seed"] = args.seed
    if args.workers is not None:
        cli_overrides["workers"] = args.workers
    if cli_overrides:
        cfg = apply_overrides(cfg, cli_overrides)
    if cfg.scale == "paper":
        print("warning: paper scale runs for hours and writes large outputs", file=sys.stderr)
    result = run_experiment(cfg)
    print(f"run complete: {result.manifest_path} ({result.elapsed_s:.1f}s)")
    return 0


def _cmd_list_presets() -> int:
    width = max(len(n) for n in preset_names())
    for name in preset_names():
        print(f"{name:<{width}}  {PRESET_SUMMARIES[name]}")
    return 0


def _cmd_replay(args) -> int:
    result = replay(args.manifest, args.out)
    print(f"replay complete: {result.manifest_path} ({result.elapsed_s:.1f}s)")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-presets":
            return _cmd_list_presets()
        if args.command == "replay":
            return _cmd_replay(args)
        raise AssertionError(f"unhandled command {args.command}")
    except StageError as exc:
        print(f"error [stage:{exc.stage}] {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DomainError, FileNotFoundError) as exc:
        print(f"error [stage:configure] {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # keep the contract: nonzero + stage-tagged line
        print(f"error [stage:unexpected] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
