"""Build-mode precision selection.

Two modes: f64 (default; required for finite-difference gradient checks)
and f32 (faster release mode).  Selected once via the LFSAMBA_PRECISION
environment variable, or programmatically with set_precision().
"""

import os

import numpy as np

from .errors import ConfigError

_PRECISIONS = {"f32": np.float32, "f64": np.float64}

_active_name = os.environ.get("LFSAMBA_PRECISION", "f64")
if _active_name not in _PRECISIONS:
    raise ConfigError(
        f"LFSAMBA_PRECISION must be one of {sorted(_PRECISIONS)}, got {_active_name!r}"
    )
_active_dtype = _PRECISIONS[_active_name]


def active_precision() -> str:
    return _active_name


def active_dtype():
    return _active_dtype


def set_precision(name: str) -> None:
    global _active_name, _active_dtype
    if name not in _PRECISIONS:
        raise ConfigError(f"precision must be one of {sorted(_PRECISIONS)}, got {name!r}")
    _active_name = name
    _active_dtype = _PRECISIONS[name]
