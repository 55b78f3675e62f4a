"""Key-value scenario configuration files.

One file per experiment; lines are ``key = value`` with ``#`` comments.
Values parse as int, float, or bare string. Overrides must reference keys
that exist in the file, and every result file records the hash of the fully
resolved configuration so a run is reconstructible from its outputs.
"""

from __future__ import annotations

import hashlib
from importlib import resources
from pathlib import Path
from typing import Dict, Union

Value = Union[int, float, str]


class ConfigError(ValueError):
    pass


def _parse_value(raw: str) -> Value:
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> Dict[str, Value]:
    cfg: Dict[str, Value] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(raw)
    return cfg


def load_config(path) -> Dict[str, Value]:
    return parse_config(Path(path).read_text())


def default_config(experiment: str) -> Dict[str, Value]:
    """Shipped configuration for one of the named experiments."""
    fname = f"{experiment}.cfg"
    ref = resources.files("poddp.scenarios").joinpath("configs", fname)
    if not ref.is_file():
        raise ConfigError(f"no shipped config for experiment {experiment!r}")
    return parse_config(ref.read_text())


def apply_overrides(cfg: Dict[str, Value], overrides: Dict[str, str]) -> Dict[str, Value]:
    """Apply ``key=value`` overrides; unknown keys are an error."""
    out = dict(cfg)
    for key, raw in overrides.items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _parse_value(str(raw))
    return out


def config_hash(cfg: Dict[str, Value]) -> str:
    canonical = "".join(f"{k}={cfg[k]!r}\n" for k in sorted(cfg))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
