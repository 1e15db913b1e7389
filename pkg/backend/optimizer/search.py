"""Per-block optimization of the BBM92 test size and the decoy-state parameters."""

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from backend.common.errors import (
    ConfigurationError,
    DomainError,
    FiniteKeyError,
    SlopeConditionError,
)
from backend.data_model.protocol import (
    BBM92Template,
    ChannelModel,
    DecoyTemplate,
    KeyResult,
)
from backend.data_model.sweep import DecoyParams, SearchSpace
from backend.numerics.precision import PrecisionConfig
from backend.protocols.bbm92 import key_length_bbm92
from backend.protocols.decoy import evaluate_decoy

logger = logging.getLogger(__name__)

BBM92_MIN_BLOCK = 100
DECOY_MIN_BLOCK = 1000
GRID_POINTS = 200
_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _rank(result: Optional[KeyResult]) -> Tuple[float, float]:
    if result is None:
        return -1.0, -math.inf
    return float(result.l), result.raw_length


def infeasible_result(eps_sec: float, eps_cor: float) -> KeyResult:
    """Placeholder result for a block with no admissible configuration."""
    return KeyResult(
        l=0, rate=0.0, eps_sec=eps_sec, eps_cor=eps_cor,
        q_or_phi_threshold=math.inf, feasible=False,
    )


def sample_size_grid(N: int, points: int = GRID_POINTS) -> np.ndarray:
    """Log-spaced distinct integers in [1, N - 1]."""
    grid = np.unique(np.round(np.geomspace(1, N - 1, points)).astype(np.int64))
    return grid[(grid >= 1) & (grid <= N - 1)]


def _count_local_maxima(lengths) -> int:
    """Peaks with a positive key length in a profile of floored lengths; plateaus count once."""
    runs = [v for i, v in enumerate(lengths) if i == 0 or v != lengths[i - 1]]
    peaks = 0
    for i, v in enumerate(runs):
        left = runs[i - 1] if i > 0 else -math.inf
        right = runs[i + 1] if i + 1 < len(runs) else -math.inf
        if v > 0 and v > left and v > right:
            peaks += 1
    return peaks


def _golden_section(objective: Callable[[int], float], lo: int, hi: int) -> int:
    """Integer golden-section search for a maximum of objective on [lo, hi]."""
    while hi - lo > 3:
        step = int(round((hi - lo) / _GOLDEN))
        left, right = hi - step, lo + step
        if left >= right:
            left, right = (lo + hi) // 2, (lo + hi) // 2 + 1
        if objective(left) >= objective(right):
            hi = right
        else:
            lo = left
    return max(range(lo, hi + 1), key=objective)


def optimize_bbm92(
    N: int,
    template: BBM92Template,
    precision: Optional[PrecisionConfig] = None,
) -> Tuple[int, KeyResult]:
    """Test size n maximizing the key length at block size N.

    A 200-point log grid locates the best region, then integer golden-section
    search on the unfloored key length refines between the neighbouring grid
    points. The refined point replaces the grid winner only if it ranks higher.
    """
    if N < BBM92_MIN_BLOCK:
        raise DomainError(f"optimize_bbm92 needs N >= {BBM92_MIN_BLOCK}, got {N}")
    cache: Dict[int, Optional[KeyResult]] = {}

    def evaluate(n: int) -> Optional[KeyResult]:
        if n not in cache:
            try:
                cache[n] = key_length_bbm92(template.build(N, n), precision)
            except SlopeConditionError:
                cache[n] = None
        return cache[n]

    grid = sample_size_grid(N)
    ranks = [_rank(evaluate(int(n))) for n in grid]
    best_i = max(range(len(grid)), key=lambda i: ranks[i])
    if _count_local_maxima([r[0] for r in ranks]) > 1:
        logger.warning("key length profile at N=%d has several local maxima", N)

    best_n = int(grid[best_i])
    if ranks[best_i][1] > -math.inf:
        lo = int(grid[max(best_i - 1, 0)])
        hi = int(grid[min(best_i + 1, len(grid) - 1)])
        refined = _golden_section(lambda n: _rank(evaluate(n))[1], lo, hi)
        if _rank(evaluate(refined)) > _rank(evaluate(best_n)):
            best_n = refined

    result = evaluate(best_n)
    if result is None:
        eps_sec = 2.0 * math.sqrt(template.eps_pe) + template.eps_pa
        return best_n, infeasible_result(eps_sec, template.eps_cor)
    logger.debug("N=%d: n_opt=%d, l=%d", N, best_n, result.l)
    return best_n, result


class _DecoyObjective:
    """Maps the unit cube onto the search box and memoizes evaluations."""

    def __init__(
        self,
        N: float,
        model: ChannelModel,
        template: DecoyTemplate,
        space: SearchSpace,
        precision: Optional[PrecisionConfig],
    ):
        self.N = N
        self.model = model
        self.template = template
        self.space = space
        self.precision = precision
        self.cache: Dict[tuple, Tuple[Optional[DecoyParams], Optional[KeyResult]]] = {}

    def params(self, unit: np.ndarray) -> DecoyParams:
        space = self.space
        u = np.clip(np.asarray(unit, dtype=float), 0.0, 1.0)
        mu_lo, mu_hi = space.mu_range
        mu = mu_lo + u[0] * (mu_hi - mu_lo)
        nu_lo, nu_hi = space.omega + space.intensity_gap, mu - space.intensity_gap
        nu = nu_lo + u[1] * (nu_hi - nu_lo)
        p_lo, p_hi = space.p_range
        p_mu = p_lo + u[2] * (p_hi - p_lo)
        p_nu = p_lo + u[3] * (p_hi - p_lo)
        cap = 1.0 - space.min_p_omega
        if p_mu + p_nu > cap:
            scale = cap / (p_mu + p_nu)
            p_mu, p_nu = p_mu * scale, p_nu * scale
        q_lo, q_hi = space.q_x_range
        q_x = q_lo + u[4] * (q_hi - q_lo)
        return DecoyParams(mu=mu, nu=nu, p_mu=p_mu, p_nu=p_nu, q_x=q_x)

    def evaluate(self, unit) -> Tuple[DecoyParams, Optional[KeyResult]]:
        params = self.params(unit)
        key = (params.mu, params.nu, params.p_mu, params.p_nu, params.q_x)
        if key not in self.cache:
            try:
                inputs = self.template.build(
                    self.N, params.mu, params.nu, self.space.omega,
                    params.p_mu, params.p_nu, params.q_x,
                )
                result = evaluate_decoy(
                    inputs, self.model, self.space.bset_resolution, self.precision
                )
            except FiniteKeyError as exc:
                logger.debug("decoy point %s rejected: %s", key, exc)
                result = None
            self.cache[key] = (params, result)
        return self.cache[key]

    def loss(self, unit) -> float:
        _, result = self.evaluate(unit)
        if result is None or not math.isfinite(result.raw_length):
            return math.inf
        return -result.raw_length / self.N


def optimize_decoy(
    N: float,
    model: ChannelModel,
    template: DecoyTemplate,
    space: Optional[SearchSpace] = None,
    precision: Optional[PrecisionConfig] = None,
) -> Tuple[DecoyParams, KeyResult]:
    """Decoy parameters maximizing the key rate at block size N.

    The midpoints of a coarse grid over the unit cube seed Nelder-Mead runs
    from the top_k grid points; a run's end point is kept only if it ranks
    above the best point seen so far.
    """
    if N < DECOY_MIN_BLOCK:
        raise DomainError(f"optimize_decoy needs N >= {DECOY_MIN_BLOCK}, got {N}")
    space = space or SearchSpace()
    objective = _DecoyObjective(N, model, template, space, precision)

    axis = (np.arange(space.grid_resolution) + 0.5) / space.grid_resolution
    mesh = np.stack(np.meshgrid(*([axis] * 5), indexing="ij"), axis=-1).reshape(-1, 5)
    scored = []
    for unit in mesh:
        params, result = objective.evaluate(unit)
        if result is not None:
            scored.append((_rank(result), tuple(unit), params, result))
    if not scored:
        raise ConfigurationError(
            f"no valid decoy configuration in the search box at N={N:g}", field="search"
        )
    scored.sort(key=lambda item: item[0], reverse=True)
    best_rank, _, best_params, best_result = scored[0]

    for rank, start, _, _ in scored[: space.top_k]:
        if not math.isfinite(rank[1]):
            continue
        run = minimize(
            objective.loss,
            np.asarray(start),
            method="Nelder-Mead",
            options={"maxfev": space.max_evaluations, "xatol": 1e-4, "fatol": 1e-12},
        )
        params, result = objective.evaluate(np.clip(run.x, 0.0, 1.0))
        if result is not None and _rank(result) > best_rank:
            best_rank, best_params, best_result = _rank(result), params, result

    logger.info(
        "N=%g %s+%s: mu=%.4g nu=%.4g p_mu=%.3g p_nu=%.3g q_x=%.3g l=%d",
        N, template.sampling_kind.value, template.bernoulli_kind.value,
        best_params.mu, best_params.nu, best_params.p_mu, best_params.p_nu,
        best_params.q_x, best_result.l,
    )
    return best_params, best_result
