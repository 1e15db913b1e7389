"""Confidence upper bounds on a population fraction and the threshold functions they induce.

A test sample of n bits is drawn without replacement from N bits. Given the
test frequency p_hat, every family returns a statistic exceeding the
population fraction except with probability eps; the affine map
(N * upper - n * x) / (N - n) turns it into a threshold on the frequency of the
remaining N - n bits.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

from backend.bounds.bernoulli import (
    divergence,
    relaxed_chernoff_terms,
    relaxed_chernoff_upper,
    relaxed_chernoff_upper_slope,
)
from backend.bounds.bound_types import (
    DEFAULT_EKERT_DIRECTION,
    DivergenceMode,
    EkertDirection,
    SamplingBoundKind,
)
from backend.bounds.ekert import ekert_threshold
from backend.common.errors import DomainError
from backend.data_model.sample import COUNT_TOLERANCE, HGSetting
from backend.numerics.hypergeometric import hg_draw, hg_log_cmf
from backend.numerics.precision import PrecisionConfig

logger = logging.getLogger(__name__)

# relative slack when snapping an off-grid p_th down to the test grid
_GRID_SNAP = 1e-12


def _log_inv(eps: float) -> float:
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"error probability must lie in (0, 1], got {eps}")
    return -math.log(eps)


def _grid_count(n: int, p_hat: float) -> int:
    count = round(n * p_hat)
    if abs(count - n * p_hat) > COUNT_TOLERANCE * max(1.0, n):
        raise DomainError(f"p_hat={p_hat} is not on the 1/n grid for n={n}")
    return int(count)


@dataclass(frozen=True)
class HushScovelTerms:
    N: float
    n: float
    eps: float
    tau: float

    @property
    def p_plus(self) -> float:
        N, n, tau = self.N, self.n, self.tau
        scale = n * n + tau * N * N
        disc = (tau * N * N) ** 2 + 4.0 * scale * (1.0 + tau * (N + 1.0))
        return (tau * N * N + math.sqrt(disc)) / (2.0 * scale)

    @property
    def valid_interval(self) -> tuple:
        return 0.0, 1.0 - math.sqrt(1.0 + self.tau * (self.N + 1.0)) / self.n


def hush_scovel_terms(N: float, n: float, eps: float) -> HushScovelTerms:
    if not 0 < n <= N:
        raise DomainError(f"Hush-Scovel needs 0 < n <= N, got n={n}, N={N}")
    return HushScovelTerms(N=N, n=n, eps=eps, tau=_log_inv(eps) / (2.0 * (N + 2.0)))


def hs_p_plus(N: float, n: float, eps: float) -> float:
    return hush_scovel_terms(N, n, eps).p_plus


def hs_forward_z(N: float, n: float, eps: float, p: float) -> float:
    """Lower statistic z(p) with Pr[p_hat <= z(p)] <= eps."""
    terms = hush_scovel_terms(N, n, eps)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"hs_forward_z needs p in [0, 1], got {p}")
    spread = (N * p + 1.0) * (N - N * p + 1.0)
    return p - math.sqrt(1.0 + terms.tau * spread) / n


def _hs_discriminant(terms: HushScovelTerms, x: float) -> float:
    N, n, tau = terms.N, terms.n, terms.tau
    return (
        tau * tau * N * N * (N + 2.0) ** 2
        + 4.0 * tau * (N * N * n * n * x * (1.0 - x) + N * N + (N + 1.0) * n * n)
        + 4.0 * n * n
    )


def hs_upper(N: float, n: float, eps: float, x: float) -> float:
    """Inverse of hs_forward_z at x; 1 + eps outside the valid interval."""
    terms = hush_scovel_terms(N, n, eps)
    lo, hi = terms.valid_interval
    if not lo <= x <= hi:
        return 1.0 + eps
    scale = n * n + terms.tau * N * N
    return (terms.tau * N * N + 2.0 * n * n * x + math.sqrt(_hs_discriminant(terms, x))) / (
        2.0 * scale
    )


def hs_upper_slope(N: float, n: float, eps: float, x: float) -> float:
    terms = hush_scovel_terms(N, n, eps)
    scale = n * n + terms.tau * N * N
    d_disc = 4.0 * terms.tau * N * N * n * n * (1.0 - 2.0 * x)
    return (2.0 * n * n + d_disc / (2.0 * math.sqrt(_hs_discriminant(terms, x)))) / (
        2.0 * scale
    )


@dataclass(frozen=True)
class GreeneWellnerTerms:
    pi: float
    f_n: float

    @property
    def shrink(self) -> float:
        return 3.0 * self.pi * (1.0 - self.f_n)

    def inner(self, x: float) -> float:
        pi, s = self.pi, self.shrink
        return pi * pi + s * (s + 4.0 * x * (1.0 - x) + 2.0 * pi * (1.0 - 2.0 * x))


def greene_wellner_terms(N: float, n: float, eps: float) -> GreeneWellnerTerms:
    if N < 2 or not 0 < n <= N:
        raise DomainError(f"Greene-Wellner needs N >= 2 and 0 < n <= N, got n={n}, N={N}")
    pi = 2.0 / (3.0 * n) * _log_inv(eps)
    return GreeneWellnerTerms(pi=pi, f_n=(n - 1.0) / (N - 1.0))


def gw_upper(N: float, n: float, eps: float, x: float) -> float:
    """Bernstein-type upper bound; 1 + eps when x > 1 - pi."""
    terms = greene_wellner_terms(N, n, eps)
    if x < 0.0 or x > 1.0 - terms.pi:
        return 1.0 + eps
    s = terms.shrink
    root = math.sqrt(max(terms.inner(x), 0.0))
    return (s + 2.0 * x + terms.pi + root) / (2.0 * (1.0 + s))


def gw_upper_slope(N: float, n: float, eps: float, x: float) -> float:
    terms = greene_wellner_terms(N, n, eps)
    s = terms.shrink
    inner = terms.inner(x)
    d_inner = s * (4.0 * (1.0 - 2.0 * x) - 4.0 * terms.pi)
    root_term = d_inner / (2.0 * math.sqrt(inner)) if inner > 0.0 else 0.0
    return (2.0 + root_term) / (2.0 * (1.0 + s))


def _cp_plus_count(
    N: int, n: int, eps: float, count: int, precision: Optional[PrecisionConfig] = None
) -> int:
    """Smallest K >= N * count / n whose CMF at count is at most eps; N + 1 if none."""
    lo = (N * count + n - 1) // n
    hi = N
    if not hg_log_cmf(N, hi, n, count).at_most(eps, precision):
        return N + 1
    # the CMF at fixed count is nonincreasing in K
    while lo < hi:
        mid = (lo + hi) // 2
        if hg_log_cmf(N, mid, n, count).at_most(eps, precision):
            hi = mid
        else:
            lo = mid + 1
    return lo


def cp_plus_hg(
    N: int,
    n: int,
    eps: float,
    p_hat: float,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Exact-CMF upper bound min{p >= p_hat | Pr[p_hat' <= p_hat | p] <= eps} on the 1/N grid."""
    setting = HGSetting(N=N, n=n)
    if setting.n < 1:
        raise DomainError(f"cp_plus_hg needs n >= 1, got n={n}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"cp_plus_hg needs eps in (0, 1), got {eps}")
    count = _grid_count(n, p_hat)
    return _cp_plus_count(N, n, eps, count, precision) / N


def confidence_upper(
    kind: Union[SamplingBoundKind, str],
    N: float,
    n: float,
    eps: float,
    p_hat: float,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    kind = SamplingBoundKind(kind)
    if not kind.has_confidence_bound:
        raise DomainError(f"{kind.value} has no confidence-bound form, use threshold()")
    if not 1 <= n <= N:
        raise DomainError(f"{kind.value}: need 1 <= n <= N, got n={n}, N={N}")
    if kind is SamplingBoundKind.RELAXED_CHERNOFF:
        return relaxed_chernoff_upper(n, eps, p_hat)
    if kind is SamplingBoundKind.HUSH_SCOVEL:
        return hs_upper(N, n, eps, p_hat)
    if kind is SamplingBoundKind.GREENE_WELLNER:
        return gw_upper(N, n, eps, p_hat)
    return cp_plus_hg(int(N), int(n), eps, p_hat, precision)


def _validate_threshold_inputs(kind: SamplingBoundKind, N, n, p_th: float) -> None:
    if not 1 <= n < N:
        raise DomainError(f"{kind.value}: threshold needs 1 <= n < N, got n={n}, N={N}")
    if not 0.0 <= p_th < 1.0:
        raise DomainError(f"{kind.value}: threshold needs p_th in [0, 1), got {p_th}")


def _snap_count(n: int, p_th: float) -> int:
    return int(math.floor(n * p_th * (1.0 + _GRID_SNAP)))


def threshold(
    kind: Union[SamplingBoundKind, str],
    N: float,
    n: float,
    eps: float,
    p_th: float,
    ekert_direction: Union[EkertDirection, str] = DEFAULT_EKERT_DIRECTION,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Threshold q_th such that Pr[q_hat >= q_th, p_hat <= p_th] <= eps.

    Values above 1 are returned as computed.
    """
    kind = SamplingBoundKind(kind)
    _validate_threshold_inputs(kind, N, n, p_th)
    if kind is SamplingBoundKind.EKERT_COMBINED:
        return ekert_threshold(N, n, eps, p_th, ekert_direction)
    if kind is SamplingBoundKind.SERFLING:
        return p_th + math.sqrt(N * (n + 1.0) * _log_inv(eps) / (2.0 * (N - n) * n * n))
    if kind is SamplingBoundKind.CLOPPER_PEARSON_HG:
        N, n = int(N), int(n)
        count = _snap_count(n, p_th)
        upper_count = _cp_plus_count(N, n, _checked_cp_eps(eps), count, precision)
        return (upper_count - count) / (N - n)
    upper = confidence_upper(kind, N, n, eps, p_th, precision)
    return (N * upper - n * p_th) / (N - n)


def _checked_cp_eps(eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise DomainError(f"cp_hg needs eps in (0, 1), got {eps}")
    return eps


def _cp_threshold_count(N: int, n: int, eps: float, count: int, precision) -> float:
    return (_cp_plus_count(N, n, eps, count, precision) - count) / (N - n)


def slope_check(
    kind: Union[SamplingBoundKind, str],
    N: float,
    n: float,
    eps: float,
    p_th: float,
    exhaustive: bool = False,
    precision: Optional[PrecisionConfig] = None,
) -> bool:
    """Whether the threshold is nondecreasing at p_th, so the PE test p_hat <= p_th is safe.

    Analytical families compare the derivative of their upper bound with n/N and
    fail inside the sentinel region. The exact-CMF family compares the last two
    grid points, or every consecutive pair up to p_th when exhaustive is set.
    Serfling and Ekert-combined thresholds need no such condition.
    """
    kind = SamplingBoundKind(kind)
    _validate_threshold_inputs(kind, N, n, p_th)
    ratio = n / N
    if kind in (SamplingBoundKind.SERFLING, SamplingBoundKind.EKERT_COMBINED):
        return True
    if kind is SamplingBoundKind.RELAXED_CHERNOFF:
        lo, hi = relaxed_chernoff_terms(n, eps).upper_interval
        if not lo <= p_th <= hi:
            return False
        return relaxed_chernoff_upper_slope(n, eps, p_th) >= ratio
    if kind is SamplingBoundKind.HUSH_SCOVEL:
        lo, hi = hush_scovel_terms(N, n, eps).valid_interval
        if not lo <= p_th <= hi:
            return False
        return hs_upper_slope(N, n, eps, p_th) >= ratio
    if kind is SamplingBoundKind.GREENE_WELLNER:
        if p_th > 1.0 - greene_wellner_terms(N, n, eps).pi:
            return False
        return gw_upper_slope(N, n, eps, p_th) >= ratio

    N, n = int(N), int(n)
    eps = _checked_cp_eps(eps)
    top = _snap_count(n, p_th)
    if top == 0:
        return True
    counts = range(0, top + 1) if exhaustive else (top - 1, top)
    previous = None
    for count in counts:
        value = _cp_threshold_count(N, n, eps, count, precision)
        if previous is not None and value < previous:
            logger.debug("cp_hg threshold decreases at count=%d (N=%d, n=%d)", count, N, n)
            return False
        previous = value
    return True


def hg_sample(seed: int, N: int, K: int, n: int, stream_id: int = 0) -> int:
    """One seeded draw from Hypergeometric(N, K, n)."""
    HGSetting(N=N, n=n, K=K)
    return hg_draw(seed, N, K, n, stream_id=stream_id)


def serfling_dominance_ratio(N: float, n: float, p: float, delta: float) -> float:
    """Ratio of the relaxed-Chernoff to the Serfling lower-tail exponent at deviation delta.

    Above 1 the relaxed-Chernoff bound is the tighter one.
    """
    if not 0.0 < delta <= p <= 1.0:
        raise DomainError(f"need 0 < delta <= p <= 1, got delta={delta}, p={p}")
    chernoff = n * divergence(p - delta, p, DivergenceMode.RELAXED)
    serfling = 2.0 * N * n * delta * delta / (N - n + 1.0)
    return chernoff / serfling
