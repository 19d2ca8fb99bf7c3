"""
Configuration loading for COLUMN PCG.
Reads the shipped YAML defaults; command line flags override them.
"""

import copy
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .errors import InvalidArgumentError


DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "default_config.yaml"

# Used when the YAML file is not shipped alongside the package
BUILTIN_DEFAULTS: Dict[str, Any] = {
    "model": {"omega2": 6.71e-4, "lambda2": 3.32e-2, "h_atmos": 0.01},
    "grid": {"geometry": "cubed-sphere", "m": 64, "n_z": 64, "planar_extent": 2.0},
    "solver": {
        "epsilon": 1e-5,
        "tau": 1e-20,
        "maxiter": 100,
        "variant": "interleaved",
        "backend": "matrix_free",
        "layout": "vertical_contiguous",
        "precision": "double",
        "workers": 1,
        "seed": 20130101,
    },
    "benchmark": {"m": 64, "n_z": 64, "iterations": 100, "repetitions": 3, "warmup": 1},
    "verify": {
        "grids": ["2x2x2", "4x4x8", "8x8x16"],
        "vectors": 20,
        "preconditioner_vectors": 10,
        "spectrum_max_n": 1024,
    },
    "output": {"verbose": False},
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load a configuration file on top of the built-in defaults.

    Args:
        path: YAML file to read (defaults to config/default_config.yaml)

    Returns:
        Nested configuration dictionary
    """
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not config_path.exists():
        if path:
            raise InvalidArgumentError(f"configuration file not found: {config_path}")
        return copy.deepcopy(BUILTIN_DEFAULTS)

    with open(config_path, "r", encoding="utf-8") as f:
        loaded = yaml.safe_load(f) or {}

    if not isinstance(loaded, dict):
        raise InvalidArgumentError(f"configuration root must be a mapping: {config_path}")
    return _merge(BUILTIN_DEFAULTS, loaded)


@lru_cache(maxsize=1)
def _cached_defaults() -> Dict[str, Any]:
    return load_config()


def defaults() -> Dict[str, Any]:
    """Shipped defaults (a fresh copy on every call)."""
    return copy.deepcopy(_cached_defaults())


def parse_grid(text: str) -> tuple:
    """Parse ``MxMxNZ`` (e.g. ``4x4x8``) into ``(m, n_z)``."""
    parts = text.lower().split("x")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise InvalidArgumentError(f"grid must look like 4x4x8 (got {text!r})") from None
    if len(values) != 3 or values[0] != values[1]:
        raise InvalidArgumentError(f"grid must be square in the horizontal, e.g. 4x4x8 (got {text!r})")
    if values[0] < 1 or values[2] < 1:
        raise InvalidArgumentError(f"grid sizes must be positive (got {text!r})")
    return values[0], values[2]
