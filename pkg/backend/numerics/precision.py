"""Numerical precision settings and the log-probability value type."""

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv

from backend.common.errors import ConfigurationError, DomainError

load_dotenv()

ENV_REL_TOL = "FKS_REL_TOL"
ENV_MAX_ITER = "FKS_MAX_ITER"
ENV_TAIL_SAFETY = "FKS_TAIL_SAFETY"
ENV_LGAMMA_CAP = "FKS_LGAMMA_CAP"


@dataclass(frozen=True)
class PrecisionConfig:
    """Tolerances shared by every iterative solver and tail comparison."""

    rel_tol: float = 1e-12
    max_iter: int = 200
    tail_safety: float = 1.0 + 1e-9
    lgamma_cap: int = 1_000_000

    def __post_init__(self):
        if not 0.0 < self.rel_tol <= 1e-6:
            raise ConfigurationError(
                f"must lie in (0, 1e-6], got {self.rel_tol}", field="rel_tol"
            )
        if self.max_iter < 1:
            raise ConfigurationError(
                f"must be a positive integer, got {self.max_iter}", field="max_iter"
            )
        if not self.tail_safety >= 1.0:
            raise ConfigurationError(
                f"must be >= 1, got {self.tail_safety}", field="tail_safety"
            )
        if self.lgamma_cap < 1:
            raise ConfigurationError(
                f"must be a positive integer, got {self.lgamma_cap}",
                field="lgamma_cap",
            )

    @property
    def log_tail_safety(self) -> float:
        return math.log(self.tail_safety)


def _env_value(name: str, cast, default):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(float(raw)) if cast is int else cast(raw)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse {raw!r}", field=name) from exc


@lru_cache(maxsize=1)
def precision_from_env() -> PrecisionConfig:
    """Build the process default from FKS_* environment variables."""
    defaults = PrecisionConfig()
    return PrecisionConfig(
        rel_tol=_env_value(ENV_REL_TOL, float, defaults.rel_tol),
        max_iter=_env_value(ENV_MAX_ITER, int, defaults.max_iter),
        tail_safety=_env_value(ENV_TAIL_SAFETY, float, defaults.tail_safety),
        lgamma_cap=_env_value(ENV_LGAMMA_CAP, int, defaults.lgamma_cap),
    )


_OVERRIDE: Optional[PrecisionConfig] = None


def set_precision(config: Optional[PrecisionConfig]) -> None:
    """Install a process-wide precision override (None restores the env default).

    Call before any worker starts; the override is read, never mutated, afterwards.
    """
    global _OVERRIDE  # pylint: disable=global-statement
    _OVERRIDE = config


def get_precision(config: Optional[PrecisionConfig] = None) -> PrecisionConfig:
    if config is not None:
        return config
    if _OVERRIDE is not None:
        return _OVERRIDE
    return precision_from_env()


@dataclass(frozen=True)
class LogProb:
    """Natural logarithm of a probability; -inf encodes probability zero."""

    value: float

    def __post_init__(self):
        if math.isnan(self.value) or self.value > 0.0:
            raise DomainError(f"log-probability must be <= 0, got {self.value}")

    @classmethod
    def from_log(cls, value: float) -> "LogProb":
        """Wrap a computed log value, absorbing round-off above zero."""
        return cls(min(float(value), 0.0))

    @classmethod
    def certain(cls) -> "LogProb":
        return cls(0.0)

    @classmethod
    def impossible(cls) -> "LogProb":
        return cls(-math.inf)

    @property
    def prob(self) -> float:
        return math.exp(self.value)

    def at_most(self, eps: float, precision: Optional[PrecisionConfig] = None) -> bool:
        """True when the inflated probability tail_safety * p does not exceed eps."""
        if self.value == -math.inf:
            return True
        if eps <= 0.0:
            return False
        return self.value + get_precision(precision).log_tail_safety <= math.log(eps)
