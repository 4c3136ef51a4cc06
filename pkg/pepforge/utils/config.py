# Run configuration loading, config/history paths for pepforge
#
# Responsibilities:
# - RunConfig dataclass tree with two presets (miniature, full)
# - Precedence: preset -> TOML file -> PEPFORGE_SEED (seed fallback) -> command-line overrides
# - Cross-platform config directory resolution and the run history file
#
# Environment variables supported:
#   PEPFORGE_SEED     seed used when neither the TOML file nor --seed sets one
#   PEPFORGE_HOME     overrides the config directory (history.json lives there)
#   PEPFORGE_HISTORY  falsy ("0", "false", "no", "off") disables history records
#
# Optional config file (TOML) search order when --config is not given:
#   1) ./pepforge.toml
#   2) $XDG_CONFIG_HOME/pepforge/config.toml (~/.config/pepforge/config.toml)
#   3) ~/.pepforge/config.toml (legacy fallback)

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core.errors import ConfigError

logger = logging.getLogger(__name__)

PRESETS = ("miniature", "full")


@dataclass
class PathsConfig:
    data_dir: str = "data"
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "out"


@dataclass
class ScheduleConfig:
    T: int = 100
    kind: str = "cosine"
    # forward-noise standard deviation in radians; pi keeps the t=T marginal near-uniform
    noise_scale: float = math.pi


@dataclass
class ModelConfig:
    blocks: int = 2
    hidden: int = 64
    heads: int = 4
    ff: int = 128
    angle_features: str = "sincos"
    residual: bool = True
    dropout: float = 0.0
    zero_init_output: bool = False


@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 50
    max_steps: int = 0  # 0: no cap
    patience: int = 10
    loss_beta: float = 0.1 * math.pi


@dataclass
class SequenceConfig:
    blosum_temperature: float = 1.0
    # weight of the uniform kernel mixed into softmax(B / tau); keeps Qbar_T mixed down to T ~ 12
    uniform_mix: float = 0.6


@dataclass
class RunConfig:
    preset: str = "miniature"
    seed: int = 0
    ext_k: int = 0
    pocket_cutoff: float = 5.0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    paths: PathsConfig = field(default_factory=PathsConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _truthy(val: bool | str | int | float | None) -> bool:
    if isinstance(val, bool):
        return val
    if val is None:
        return False
    s = str(val).strip().lower()
    return s in {"1", "true", "yes", "on"}


def preset_config(name: str = "miniature") -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {list(PRESETS)}")
    cfg = RunConfig(preset=name)
    if name == "full":
        cfg.schedule.T = 1000
        cfg.model = ModelConfig(blocks=6, hidden=256, heads=8, ff=512)
    return cfg


def _coerce(current: Any, value: Any, path: str) -> Any:
    """Coerce a TOML value onto the type of the field's current value."""
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            return _truthy(value)
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(current):
            raise ConfigError(f"{path}: expected a list of {len(current)} numbers, got {value!r}")
        return tuple(_coerce(c, v, f"{path}[{i}]") for i, (c, v) in enumerate(zip(current, value)))
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _apply(obj: Any, mapping: dict[str, Any], path: str) -> None:
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in mapping.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown configuration key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.{key}: expected a table")
            _apply(current, value, f"{path}.{key}")
        else:
            setattr(obj, key, _coerce(current, value, f"{path}.{key}"))


def _config_paths() -> list[str]:
    home = os.path.expanduser("~")
    xdg_config_home = os.environ.get("XDG_CONFIG_HOME", os.path.join(home, ".config"))
    return [
        os.path.join(os.getcwd(), "pepforge.toml"),
        os.path.join(xdg_config_home, "pepforge", "config.toml"),
        os.path.join(home, ".pepforge", "config.toml"),
    ]


def read_toml(path: str) -> dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as ex:
        raise ConfigError(f"config file not found: {path}") from ex
    except tomllib.TOMLDecodeError as ex:
        raise ConfigError(f"config file {path} is not valid TOML: {ex}") from ex


def parse_override(text: str) -> tuple[list[str], Any]:
    """'section.key=value' -> (['section', 'key'], value); the value is read as a TOML literal."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    dotted, raw = text.split("=", 1)
    keys = [k.strip() for k in dotted.strip().split(".") if k.strip()]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return keys, value


def load_run_config(
    path: str | None = None,
    preset: str | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    ext_k: int | None = None,
    search: bool = True,
) -> RunConfig:
    """
    Build the effective RunConfig. `preset` on the command line wins over a preset named in
    the TOML file; explicit seed/ext_k arguments win over everything.
    """
    data: dict[str, Any] = {}
    if path is None and search:
        for candidate in _config_paths():
            if os.path.isfile(candidate):
                logger.info(f"Using config file {candidate}")
                path = candidate
                break
    if path is not None:
        data = read_toml(path)

    chosen = preset or str(data.get("preset", "miniature"))
    cfg = preset_config(chosen)
    body = {k: v for k, v in data.items() if k != "preset"}
    _apply(cfg, body, "$")

    if "seed" not in data:
        env_seed = os.environ.get("PEPFORGE_SEED")
        if env_seed not in (None, ""):
            try:
                cfg.seed = int(env_seed)
            except ValueError as ex:
                raise ConfigError(f"PEPFORGE_SEED must be an integer, got {env_seed!r}") from ex

    for item in overrides or []:
        keys, value = parse_override(item)
        nested: dict[str, Any] = {keys[-1]: value}
        for k in reversed(keys[:-1]):
            nested = {k: nested}
        _apply(cfg, nested, "$")

    if seed is not None:
        cfg.seed = int(seed)
    if ext_k is not None:
        cfg.ext_k = int(ext_k)

    from .config_validation import assert_valid_run_config

    assert_valid_run_config(cfg.to_dict())
    return cfg


def run_config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Rebuild a RunConfig from its to_dict() form (checkpoints, effective-config files)."""
    cfg = preset_config(str(data.get("preset", "miniature")))
    _apply(cfg, {k: v for k, v in data.items() if k != "preset"}, "$")
    return cfg


# --- Persistence helpers: config dir and run history ---

def get_config_dir() -> str:
    """
    Resolve and ensure the pepforge config directory exists. PEPFORGE_HOME wins; otherwise the
    directory of the first search path that can be created.
    """
    override = os.environ.get("PEPFORGE_HOME")
    candidates = [override] if override else [os.path.dirname(p) for p in _config_paths()[1:]]
    for d in candidates:
        try:
            os.makedirs(d, exist_ok=True)
            return d
        except OSError as ex:
            logger.debug(f"get_config_dir: ensure dir failed for {d}: {ex}")
    return os.getcwd()


def get_history_path() -> str:
    return os.path.join(get_config_dir(), "history.json")


def append_history(entry: dict[str, Any]) -> None:
    """
    Append one record to the history JSON array. Non-array or corrupt files are reset.
    Adds a 'ts' timestamp to the entry.
    """
    if not _truthy(os.environ.get("PEPFORGE_HISTORY", "1")):
        return
    path = get_history_path()
    try:
        if os.path.isfile(path):
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
            if not isinstance(data, list):
                data = []
        else:
            data = []
    except (OSError, ValueError):
        data = []

    e = dict(entry)
    e.setdefault("ts", time.time())
    data.append(e)

    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
    except OSError as ex:
        logger.warning(f"Failed to write history {path}: {ex}")


def read_history(limit: int | None = None) -> list[dict[str, Any]]:
    path = get_history_path()
    data: list[dict[str, Any]] = []
    try:
        if os.path.isfile(path):
            with open(path, encoding="utf-8") as f:
                raw = json.load(f)
            if isinstance(raw, list):
                data = raw
    except (OSError, ValueError) as ex:
        logger.warning(f"Failed to read history {path}: {ex}")
    if isinstance(limit, int) and limit > 0 and len(data) > limit:
        return data[-limit:]
    return data


__all__ = [
    "PRESETS",
    "PathsConfig",
    "ScheduleConfig",
    "ModelConfig",
    "OptimizerConfig",
    "SequenceConfig",
    "RunConfig",
    "preset_config",
    "read_toml",
    "parse_override",
    "load_run_config",
    "run_config_from_dict",
    "get_config_dir",
    "get_history_path",
    "append_history",
    "read_history",
]
