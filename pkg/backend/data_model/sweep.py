"""Records produced by sweeps, optimizers and the minimum block size search."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from backend.common.errors import ConfigurationError

MICIUS_BLOCK_SIZE = 3100


class Protocol(Enum):
    """Finite-key evaluator selected for a run."""

    BBM92 = "bbm92"
    DECOY = "decoy"


class TaskKind(Enum):
    """Unit of work dispatched by the sweep pipeline."""

    THRESHOLD_POINT = "threshold_point"
    BBM92_POINT = "bbm92_point"
    DECOY_POINT = "decoy_point"
    MIN_BLOCK = "min_block"


@dataclass(frozen=True)
class DecoyParams:
    """Free decoy-state parameters tuned by the optimizer."""

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    q_x: float


@dataclass(frozen=True)
class SearchSpace:
    """Box constraints for the decoy optimizer and the B-set grid resolution."""

    mu_range: Tuple[float, float] = (0.1, 1.0)
    p_range: Tuple[float, float] = (0.05, 0.9)
    q_x_range: Tuple[float, float] = (0.01, 0.5)
    omega: float = 1e-4
    min_p_omega: float = 0.05
    intensity_gap: float = 1e-3
    grid_resolution: int = 3
    top_k: int = 3
    max_evaluations: int = 400
    bset_resolution: int = 50

    def __post_init__(self):
        for name in ("mu_range", "p_range", "q_x_range"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi:
                raise ConfigurationError(f"need 0 < lo <= hi, got ({lo}, {hi})", field=name)
        if self.q_x_range[1] >= 1.0 or self.p_range[1] >= 1.0:
            raise ConfigurationError("probability ranges must stay below 1", field="search")
        if not 0.0 <= self.omega < self.mu_range[0] - 2.0 * self.intensity_gap:
            raise ConfigurationError(
                f"omega={self.omega} leaves no room below mu_min={self.mu_range[0]}",
                field="omega",
            )
        if not 0.0 < self.min_p_omega < 1.0:
            raise ConfigurationError(
                f"must lie in (0, 1), got {self.min_p_omega}", field="min_p_omega"
            )
        if self.grid_resolution < 1 or self.top_k < 1 or self.max_evaluations < 1:
            raise ConfigurationError(
                "grid_resolution, top_k and max_evaluations must be positive",
                field="search",
            )
        if self.bset_resolution < 2:
            raise ConfigurationError(
                f"must be >= 2, got {self.bset_resolution}", field="bset_resolution"
            )


@dataclass(frozen=True)
class SweepRecord:
    """One CSV row of a key-rate sweep."""

    N: float
    family: str
    l: int
    rate: float
    eps_sec: float
    feasible: bool
    n_opt: Optional[int] = None
    bernoulli_family: Optional[str] = None
    params: Optional[DecoyParams] = None
    marker: str = ""


@dataclass(frozen=True)
class ThresholdRecord:
    p_th: float
    family: str
    q_th: float

    @property
    def status(self) -> str:
        """Empty for an informative threshold; q_th >= 1 accepts any error rate."""
        if math.isinf(self.q_th):
            return "infeasible"
        if self.q_th >= 1.0:
            return "vacuous"
        return ""


@dataclass
class MinBlockReport:
    """Outcome of the minimum block size search for one family."""

    protocol: Protocol
    family: str
    n_min: Optional[int]
    feasible: bool
    verified: bool
    evaluations: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "family": self.family,
            "n_min": self.n_min,
            "feasible": self.feasible,
            "verified": self.verified,
            "evaluations": self.evaluations,
            "notes": list(self.notes),
        }
