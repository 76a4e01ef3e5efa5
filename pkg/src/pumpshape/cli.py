"""Command-line entry point: ``pumpshape run | validate-screens | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError
from .scenarios import SCENARIOS, build_config, run_scenario


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj and all(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def format_table(metrics: dict) -> str:
    rows = [(k, json.dumps(v) if isinstance(v, (list, type(None), bool)) else
             f"{v:.6g}" if isinstance(v, float) else str(v)) for k, v in _flatten(metrics)]
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _cmd_run(args) -> int:
    data = _config_dict(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if args.scenario:
        data["scenario"] = args.scenario
    cfg = build_config(data, args.preset, args.seed)
    metrics = run_scenario(cfg, args.out)
    print(format_table(metrics))
    return 0


def _config_dict(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _cmd_validate(args) -> int:
    data = {"scenario": "screen-validate"}
    if args.screens is not None:
        data["validation"] = {"screens": args.screens}
    cfg = build_config(data, args.preset, args.seed)
    metrics = run_scenario(cfg, args.out)
    print(format_table({k: metrics[k] for k in sorted(metrics)
                        if k.startswith(("max_", "within", "d_at", "screens"))}))
    return 0


def _cmd_report(args) -> int:
    path = Path(args.dir) / "metrics.json"
    try:
        metrics = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    print(format_table(metrics))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pumpshape",
                                description="Pump-shaping turbulence compensation scenarios")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured scenario")
    run.add_argument("--config", help="scenario JSON file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--preset", choices=["lab", "field"], help="parameter preset")
    run.add_argument("--scenario", choices=SCENARIOS, help="override the scenario name")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate-screens", help="screen structure-function check")
    val.add_argument("--out", default="screen-validate", help="output directory")
    val.add_argument("--seed", type=int)
    val.add_argument("--preset", choices=["lab", "field"])
    val.add_argument("--screens", type=int, help="ensemble size")
    val.set_defaults(func=_cmd_validate)

    rep = sub.add_parser("report", help="print a run's metrics as a table")
    rep.add_argument("dir")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        code, kind = 2, "config_error"
        err = exc
    except Exception as exc:  # report anything else as machine-readable too
        code, kind = 1, type(exc).__name__
        err = exc
    json.dump({"error": kind, "message": str(err)}, sys.stderr)
    sys.stderr.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
