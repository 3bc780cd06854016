"""JSON configuration handling shared by all CLI commands.

Each command owns a complete default config dict.  A config file may override
any subset of keys (unknown keys are rejected), and `--key=value` flags
override individual entries by dotted path.  The RMMB_SEED environment
variable, when set, replaces every key named "seed" anywhere in the merged
config so a whole run can be re-seeded in one place.
"""

from __future__ import annotations

import copy
import json
import os


class ConfigError(ValueError):
    """Malformed or semantically invalid configuration."""


TRAIN_DEFAULTS = {
    "seed": 2024,
    "batch_size": 16,
    "epochs": 20,
    "learning_rate": 0.1,
    "log_every": 10,
    "hidden_dim": 16,
    "checkpoint": None,
    "sketch": {
        "distribution": "gaussian",
        "rho": 0.5,
        "bproj_min": 1,
        "bproj_max": None,
        "seed": 1234,
    },
    "dataset": {
        "path": None,
        "n_samples": 256,
        "dim": 4,
        "classes": 2,
        "separation": 8.0,
        "seed": 7,
    },
}

# Same knobs, but report every step by default and keep runs short: the
# paired exact-vs-randomized pass is for inspecting noise, not training.
VARIANCE_REPORT_DEFAULTS = copy.deepcopy(TRAIN_DEFAULTS)
del VARIANCE_REPORT_DEFAULTS["checkpoint"]
VARIANCE_REPORT_DEFAULTS["epochs"] = 2
VARIANCE_REPORT_DEFAULTS["log_every"] = 1

VERIFY_DEFAULTS = {
    "seed": 20260814,
    "counterexample": {"epsilons": [0.5, 1.0, 2.0, 10.0], "tolerance": 1e-12},
    "sgd_oracle": {"cases": 200, "tolerance": 1e-10},
    "rmm_monte_carlo": {"combos": 10, "samples": 100000, "tolerance": 0.05},
    "unbiasedness": {"samples": 10000, "tolerance_sigma": 4.0},
    "bound_sweep": {"draws": 1000},
    "rematerialization": {},
    "finite_differences": {
        "step_size": 1e-5,
        "input_tolerance": 1e-6,
        "weight_tolerance": 1e-5,
        "weight_entries": 20,
    },
    "memory_accounting": {},
}

BENCH_MEMORY_DEFAULTS = {
    "seed": 99,
    "n_out": 32,
    "batch_sizes": [16, 64, 256],
    "input_dims": [32, 128],
    "rhos": [0.1, 0.25, 0.5, 1.0],
    "distribution": "gaussian",
}

BENCH_THROUGHPUT_DEFAULTS = {
    "seed": 99,
    "batch_sizes": [64, 256],
    "n_in": 128,
    "n_out": 128,
    "rhos": [0.1, 0.25, 0.5, 1.0],
    "iters": 50,
    "warmup": 5,
    "distribution": "gaussian",
}


def _merge_into(base: dict, incoming: dict, path: str) -> None:
    for key, value in incoming.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge_into(base[key], value, here)
        else:
            base[key] = value


def load_config(path: str | None, defaults: dict) -> dict:
    """Defaults deep-copied, then overridden by the JSON file at ``path``.

    Raises ConfigError for unreadable files, invalid JSON, or unknown keys.
    """
    cfg = copy.deepcopy(defaults)
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            incoming = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config file {path}: {exc}") from exc
    if not isinstance(incoming, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    _merge_into(cfg, incoming, "")
    return cfg


def parse_override(flag: str) -> tuple[list[str], object]:
    """Parse one ``--key=value`` or ``--a.b.c=value`` flag.

    The value is interpreted as JSON when possible (numbers, booleans, null,
    lists, objects) and as a bare string otherwise.
    """
    if not flag.startswith("--") or "=" not in flag:
        raise ConfigError(f"malformed override {flag!r}; expected --key=value")
    key, _, raw = flag[2:].partition("=")
    if not key:
        raise ConfigError(f"malformed override {flag!r}; empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(cfg: dict, key_path: list[str], value: object) -> None:
    """Set a dotted-path key that already exists in the config."""
    node = cfg
    for part in key_path[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key: {'.'.join(key_path)}")
        node = node[part]
    leaf = key_path[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key: {'.'.join(key_path)}")
    node[leaf] = value


def apply_env_seed(cfg: dict, env: os._Environ | dict | None = None) -> None:
    """Replace every key named "seed" with int(RMMB_SEED) when the env var is set."""
    env = os.environ if env is None else env
    raw = env.get("RMMB_SEED")
    if raw is None:
        return
    try:
        seed = int(raw)
    except ValueError as exc:
        raise ConfigError(f"RMMB_SEED must be an integer, got {raw!r}") from exc

    def walk(node: dict) -> None:
        for key, value in node.items():
            if key == "seed":
                node[key] = seed
            elif isinstance(value, dict):
                walk(value)

    walk(cfg)
