"""Command-line interface: ``rmmb <command> --config <path> [--key=value ...]``.

Commands emit JSON Lines on stdout (and to ``--out`` when given).  Exit codes:
0 success, 1 failed verification check or diverged run, 2 usage or config
error.  Setting the RMMB_SEED environment variable overrides every "seed" key
in the effective config.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import (
    BENCH_MEMORY_DEFAULTS,
    BENCH_THROUGHPUT_DEFAULTS,
    TRAIN_DEFAULTS,
    VARIANCE_REPORT_DEFAULTS,
    VERIFY_DEFAULTS,
    ConfigError,
    apply_env_seed,
    apply_override,
    load_config,
    parse_override,
)
from .bench import bench_memory_records, bench_throughput_records
from .trainer import TrainConfig, TrainingDivergedError, save_model, train, variance_report_records
from .verify import run_verify

_DEFAULTS = {
    "verify": VERIFY_DEFAULTS,
    "variance-report": VARIANCE_REPORT_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "bench-memory": BENCH_MEMORY_DEFAULTS,
    "bench-throughput": BENCH_THROUGHPUT_DEFAULTS,
}

_HELP = {
    "verify": "run the built-in verification suites",
    "variance-report": "paired exact-vs-randomized noise reports per step",
    "train": "train the two-layer perceptron and emit step metrics",
    "bench-memory": "analytic and measured activation-storage bytes",
    "bench-throughput": "forward+backward throughput, exact vs randomized",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmmb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _DEFAULTS:
        cmd = sub.add_parser(name, help=_HELP[name])
        cmd.add_argument("--config", default=None, help="JSON config file")
        cmd.add_argument("--out", default=None, help="also write the JSONL output here")
    return parser


def _run_command(command: str, cfg: dict) -> tuple[list[dict], int]:
    if command == "verify":
        results = run_verify(cfg)
        code = 0 if all(r.passed for r in results) else 1
        return [r.to_json_dict() for r in results], code
    if command == "train":
        train_cfg = TrainConfig.from_dict({k: v for k, v in cfg.items() if k != "checkpoint"})
        metrics, model = train(train_cfg)
        if cfg.get("checkpoint"):
            save_model(cfg["checkpoint"], model)
        return [m.to_json_dict() for m in metrics], 0
    if command == "variance-report":
        return variance_report_records(TrainConfig.from_dict(cfg)), 0
    if command == "bench-memory":
        return bench_memory_records(cfg), 0
    if command == "bench-throughput":
        return bench_throughput_records(cfg), 0
    raise ConfigError(f"unknown command: {command}")


def main(argv: list[str] | None = None) -> int:
    try:
        args, extras = build_parser().parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, _DEFAULTS[args.command])
        for flag in extras:
            key_path, value = parse_override(flag)
            apply_override(cfg, key_path, value)
        apply_env_seed(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        records, code = _run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lines = [json.dumps(record) for record in records]
    for line in lines:
        print(line)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines))
            if lines:
                fh.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
