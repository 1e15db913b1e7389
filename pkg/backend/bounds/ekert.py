"""Threshold from the union of the Serfling and Hush-Scovel inequalities.

The deviation xi runs over the integer grid N * (p_th + xi) = j. Each feasible
xi gives a valid threshold, and the search returns the optimum in the
requested direction.
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from backend.bounds.bound_types import DEFAULT_EKERT_DIRECTION, EkertDirection
from backend.common.errors import DomainError, InfeasibleError

logger = logging.getLogger(__name__)

_CHUNK = 4096
# above this population the grid is scanned with a stride, then refined
_COARSE_ABOVE = 1_000_000
_COARSE_POINTS = 1_000_000


@dataclass(frozen=True)
class EkertTerms:
    """Optimal deviation on the grid and the threshold it yields."""

    xi: float
    g: float
    opt_direction: EkertDirection
    q_th: float


class _EkertGrid:
    def __init__(self, N: float, n: float, eps: float, p_th: float):
        self.N = N
        self.n = n
        self.p_th = p_th
        self.log_inv = -math.log(eps)
        self.exponent_scale = 2.0 * N * n / (N - n + 1.0)
        # smallest xi with exp(-E) < eps
        xi_min = math.sqrt(max(self.log_inv, 0.0) / self.exponent_scale)
        self.j_lo = int(math.floor(N * (p_th + xi_min))) + 1
        self.j_lo = max(self.j_lo, int(math.floor(N * p_th)) + 1, 1)
        self.j_hi = int(N)

    def g(self, j):
        N = self.N
        return 1.0 / (j + 1.0) + 1.0 / (N - j + 1.0)

    def values(self, js: np.ndarray) -> np.ndarray:
        js = js.astype(float)
        xi = js / self.N - self.p_th
        excess = self.exponent_scale * xi * xi - self.log_inv
        feasible = (xi > 0.0) & (excess > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = self.log_inv - np.log(-np.expm1(-excess))
            root = np.sqrt(1.0 + log_term / (2.0 * self.g(js)))
            out = js / self.N + root / (self.N - self.n)
        return np.where(feasible & np.isfinite(out), out, np.nan)


def _scan_min(grid: _EkertGrid, lo: int, hi: int, stride: int):
    best_value, best_j = math.inf, None
    start = lo
    while start <= hi:
        # the threshold is at least j / N
        if start / grid.N >= best_value:
            break
        js = np.arange(start, min(start + _CHUNK * stride, hi + 1), stride)
        vals = grid.values(js)
        if not np.all(np.isnan(vals)):
            i = int(np.nanargmin(vals))
            if vals[i] < best_value:
                best_value, best_j = float(vals[i]), int(js[i])
        start = int(js[-1]) + stride
    return best_value, best_j


def _scan_max(grid: _EkertGrid, lo: int, hi: int, stride: int):
    best_value, best_j = -math.inf, None
    for start in range(lo, hi + 1, _CHUNK * stride):
        js = np.arange(start, min(start + _CHUNK * stride, hi + 1), stride)
        vals = grid.values(js)
        if not np.all(np.isnan(vals)):
            i = int(np.nanargmax(vals))
            if vals[i] > best_value:
                best_value, best_j = float(vals[i]), int(js[i])
    return best_value, best_j


def ekert_search(
    N: float,
    n: float,
    eps: float,
    p_th: float,
    direction: Union[EkertDirection, str] = DEFAULT_EKERT_DIRECTION,
) -> EkertTerms:
    direction = EkertDirection(direction)
    if not 1 <= n < N:
        raise DomainError(f"ekert: threshold needs 1 <= n < N, got n={n}, N={N}")
    if not 0.0 <= p_th < 1.0:
        raise DomainError(f"ekert: threshold needs p_th in [0, 1), got {p_th}")
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"ekert: eps must lie in (0, 1], got {eps}")

    grid = _EkertGrid(N, n, eps, p_th)
    if grid.j_lo > grid.j_hi:
        raise InfeasibleError(
            f"ekert: no grid deviation xi satisfies eps > exp(-2Nn xi^2/(N-n+1)) "
            f"for N={N}, n={n}, eps={eps}, p_th={p_th}"
        )
    scan = _scan_min if direction is EkertDirection.MIN_TIGHTEST else _scan_max
    stride = 1
    if N > _COARSE_ABOVE:
        stride = max(1, (grid.j_hi - grid.j_lo) // _COARSE_POINTS)
    value, best_j = scan(grid, grid.j_lo, grid.j_hi, stride)
    if stride > 1 and best_j is not None:
        refined = scan(
            grid, max(grid.j_lo, best_j - stride), min(grid.j_hi, best_j + stride), 1
        )
        if refined[1] is not None:
            value, best_j = refined
    if best_j is None:
        raise InfeasibleError(
            f"ekert: feasible set is empty for N={N}, n={n}, eps={eps}, p_th={p_th}"
        )
    logger.debug("ekert %s optimum at j=%d, q_th=%.6g", direction.value, best_j, value)
    return EkertTerms(
        xi=best_j / N - p_th, g=float(grid.g(best_j)), opt_direction=direction, q_th=value
    )


def ekert_threshold(
    N: float,
    n: float,
    eps: float,
    p_th: float,
    direction: Union[EkertDirection, str] = DEFAULT_EKERT_DIRECTION,
) -> float:
    return ekert_search(N, n, eps, p_th, direction).q_th
