"""
Configuration helpers

Settings are resolved per key from, highest first: command-line flags, the
--config file (dotenv format), the process environment, built-in defaults.
"""

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_KEYS = (
    "VINEVI_PCAP",
    "VINEVI_PACE",
    "VINEVI_IFACE",
    "VINEVI_MODEL",
    "VINEVI_HEURISTIC",
    "VINEVI_LISTEN",
    "VINEVI_PUSH_URL",
    "VINEVI_JOB",
    "VINEVI_PUSH_INTERVAL",
    "VINEVI_WINDOW",
    "VINEVI_SAMPLE",
    "VINEVI_WORKERS",
    "VINEVI_QUEUE_SIZE",
    "VINEVI_MIN_CONFIDENCE",
)

DEFAULTS: Dict[str, str] = {
    "VINEVI_PACE": "false",
    "VINEVI_HEURISTIC": "false",
    "VINEVI_LISTEN": "127.0.0.1:9155",
    "VINEVI_JOB": "vinevi",
    "VINEVI_PUSH_INTERVAL": "15s",
    "VINEVI_WINDOW": "10s",
    "VINEVI_SAMPLE": "all",
    "VINEVI_WORKERS": "1",
    "VINEVI_QUEUE_SIZE": "1024",
    "VINEVI_MIN_CONFIDENCE": "0.0",
}

DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")
_UNIT_SECONDS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0, None: 1.0}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def parse_duration(text: Union[str, float, int]) -> float:
    """'500ms', '10s', '2m', '1h' or a bare number of seconds"""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        seconds = float(text)
    else:
        match = DURATION_RE.match(str(text).lower())
        if not match:
            raise ConfigError(f"invalid duration {text!r}; use e.g. 500ms, 10s, 2m")
        seconds = float(match.group(1)) * _UNIT_SECONDS[match.group(2)]
    if seconds <= 0:
        raise ConfigError(f"duration must be positive, got {text!r}")
    return seconds


def parse_bool(text: Union[str, bool], key: str = "value") -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ConfigError(f"{key} must be a boolean, got {text!r}")


def parse_int(text: Any, key: str, minimum: Optional[int] = None) -> int:
    try:
        value = int(str(text).strip())
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    return value


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {k: v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    return values


# a layer that sets one member of a group replaces the whole group below it
EXCLUSIVE_GROUPS = (
    ("VINEVI_PCAP", "VINEVI_IFACE"),
    ("VINEVI_MODEL", "VINEVI_HEURISTIC"),
)


def _apply_layer(settings: Dict[str, Any], layer: Mapping[str, Any]) -> None:
    given = {k: v for k, v in layer.items() if v is not None and v != ""}
    for group in EXCLUSIVE_GROUPS:
        if any(key in given for key in group):
            for key in group:
                settings.pop(key, None)
    settings.update(given)


def resolve_settings(flags: Mapping[str, Any], config_file: Optional[Union[str, Path]] = None,
                     environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Merge every layer; flag values of None mean 'not given'"""
    environ = os.environ if environ is None else environ
    unknown = sorted(set(flags) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown settings: {', '.join(unknown)}")

    settings: Dict[str, Any] = dict(DEFAULTS)
    _apply_layer(settings, {key: environ.get(key) for key in CONFIG_KEYS})
    if config_file:
        _apply_layer(settings, read_config_file(config_file))
        logger.debug(f"Loaded config file {config_file}")
    # store_true flags arrive as False when absent
    _apply_layer(settings, {k: v for k, v in flags.items() if v is not False})
    return settings
