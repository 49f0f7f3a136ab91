import math
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from specloc_core.errors import ConfigError

BASE_DIR = Path(__file__).resolve().parent.parent

ENV_PATH = BASE_DIR / ".env"

# Integrator
DEFAULT_RTOL = 1e-10
RTOL_MIN = 1e-14
RTOL_MAX = 1e-6
ATOL_FACTOR = 1e-12
OVERFLOW_GUARD = 1e100

# WKB seed radius search
SEED_MIN_RADIUS = 5.0
SEED_RADIUS_GROWTH = 1.25
SEED_MAX_RADIUS = 400.0
DEFAULT_SEED_MODULUS = 1e4
DEFAULT_WKB_RATIO = 1e-3

# Eigenvalues and continuation
DEFAULT_EIG_TOL = 1e-8
DEFAULT_TRACE_STEP = 0.05
NEWTON_FD_STEP = 1e-6
TRACE_FD_STEP = 1e-5
CORRECTOR_TOL = 1e-8
GRADIENT_FLOOR = 1e-10

DEFAULT_LOG_LEVEL = "WARNING"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    ode_rtol: float = DEFAULT_RTOL
    eig_tol: float = DEFAULT_EIG_TOL
    trace_step: float = DEFAULT_TRACE_STEP
    seed_modulus: float = DEFAULT_SEED_MODULUS
    wkb_ratio: float = DEFAULT_WKB_RATIO
    shoot_sector_centre: bool = True
    log_level: str = DEFAULT_LOG_LEVEL


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}", variable=name)
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive and finite, got {raw!r}", variable=name)
    return value


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    lowered = raw.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"{name} must be a boolean flag, got {raw!r}", variable=name)


def check_rtol(rtol: float) -> float:
    if not (RTOL_MIN <= rtol <= RTOL_MAX):
        raise ConfigError(
            f"rtol must lie in [{RTOL_MIN:g}, {RTOL_MAX:g}], got {rtol:g}", rtol=rtol
        )
    return rtol


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """
    Read the SPECLOC_* environment once and cache the result.

    The CLI loads `.env` before the first call; tests call
    `get_settings.cache_clear()` after patching the environment.
    """
    level = os.environ.get("SPECLOC_LOG_LEVEL", DEFAULT_LOG_LEVEL).strip().upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"Unknown log level {level!r}", variable="SPECLOC_LOG_LEVEL")

    return Settings(
        ode_rtol=check_rtol(_env_float("SPECLOC_RTOL", DEFAULT_RTOL)),
        eig_tol=_env_float("SPECLOC_EIG_TOL", DEFAULT_EIG_TOL),
        trace_step=_env_float("SPECLOC_TRACE_STEP", DEFAULT_TRACE_STEP),
        seed_modulus=_env_float("SPECLOC_SEED_MODULUS", DEFAULT_SEED_MODULUS),
        wkb_ratio=_env_float("SPECLOC_WKB_RATIO", DEFAULT_WKB_RATIO),
        shoot_sector_centre=_env_flag("SPECLOC_SECTOR_CENTRE", True),
        log_level=level,
    )
