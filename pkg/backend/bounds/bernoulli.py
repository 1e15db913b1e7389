"""Confidence bounds on the mean of independent Bernoulli trials.

Four families feed the decoy-state estimates: the relaxed additive Chernoff
bound, the exact multiplicative Chernoff bound (Lambert W form), Hoeffding's
inequality and the optimal binomial (Clopper-Pearson type) bounds.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special as sc

from backend.bounds.bound_types import BernoulliBoundKind, Direction, DivergenceMode
from backend.common.errors import DomainError
from backend.data_model.sample import COUNT_TOLERANCE, BernoulliSample
from backend.numerics.precision import PrecisionConfig
from backend.numerics.special import LambertBranch, lambert_w, reg_inc_beta

logger = logging.getLogger(__name__)

CP_DELTA_SHIFT = 1e-12
CP_MAX_EPS = 0.25
# -exp(-c) underflows past this c
_MULT_CHERNOFF_C_MAX = 700.0
# below this c - 1 the Lambert W branch point is replaced by its series
_MULT_CHERNOFF_SERIES_T = 1e-8


def _log_inv(eps: float) -> float:
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"error probability must lie in (0, 1], got {eps}")
    return -math.log(eps)


@dataclass(frozen=True)
class RelaxedChernoffTerms:
    """Coefficients of the relaxed-divergence quadratic for n trials at error eps."""

    n: float
    eps: float
    kappa: float

    @property
    def a(self) -> float:
        return 1.0 + self.kappa

    def b_of_p(self, p: float) -> float:
        return -2.0 * p - self.kappa * (3.0 - 4.0 * p)

    def c_of_p(self, p: float) -> float:
        return p * p - self.kappa * p * (6.0 - 4.0 * p)

    @property
    def lower_interval(self) -> tuple:
        return 3.0 * self.kappa / (1.0 + self.kappa), 1.0

    @property
    def upper_interval(self) -> tuple:
        return 0.0, (1.0 - 2.0 * self.kappa) / (1.0 + self.kappa)

    @property
    def forward_limit(self) -> float:
        """Largest p whose forward statistic stays inside [p, 1]."""
        return (1.0 - 2.0 * self.kappa) / (1.0 + 4.0 * self.kappa)

    def gamma(self, sign: float, x: float) -> float:
        k = self.kappa
        root = math.sqrt(max(k * (k + x - x * x), 0.0))
        return (3.0 * k + (1.0 - 2.0 * k) * x + sign * 3.0 * root) / (1.0 + 4.0 * k)


def relaxed_chernoff_terms(n: float, eps: float) -> RelaxedChernoffTerms:
    if not n > 0:
        raise DomainError(f"relaxed Chernoff needs n > 0, got {n}")
    return RelaxedChernoffTerms(n=n, eps=eps, kappa=2.0 * _log_inv(eps) / (9.0 * n))


def divergence(
    z: Union[float, np.ndarray],
    p: Union[float, np.ndarray],
    mode: Union[DivergenceMode, str] = DivergenceMode.EXACT,
):
    """Kullback-Leibler divergence D(z||p) or its rational relaxation D(z, p).

    Exact mode returns inf when p is 0 or 1 and z differs from it.
    """
    mode = DivergenceMode(mode)
    z_arr = np.asarray(z, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    if np.any((z_arr < 0) | (z_arr > 1) | (p_arr < 0) | (p_arr > 1)):
        raise DomainError("divergence needs z and p in [0, 1]")
    if mode is DivergenceMode.EXACT:
        out = sc.rel_entr(z_arr, p_arr) + sc.rel_entr(1.0 - z_arr, 1.0 - p_arr)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                9.0
                * (z_arr - p_arr) ** 2
                / (2.0 * (z_arr + 2.0 * p_arr) * (3.0 - z_arr - 2.0 * p_arr))
            )
        out = np.where(z_arr == p_arr, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def forward_z(n: float, p: float, eps: float) -> float:
    """Larger root z of a z^2 + b(p) z + c(p) = 0, so that Pr[p_hat >= z] <= eps."""
    terms = relaxed_chernoff_terms(n, eps)
    if p < 0.0:
        raise DomainError(f"forward_z needs p >= 0, got {p}")
    if p > terms.forward_limit:
        raise DomainError(
            f"p={p} exceeds (1-2κ)/(1+4κ)={terms.forward_limit:.6g} for n={n}, eps={eps}"
        )
    a, b, c = terms.a, terms.b_of_p(p), terms.c_of_p(p)
    disc = max(b * b - 4.0 * a * c, 0.0)
    return min(max((-b + math.sqrt(disc)) / (2.0 * a), p), 1.0)


def relaxed_chernoff_upper(n: float, eps: float, x: float) -> float:
    """Gamma+ at frequency x; 1 + eps outside [0, (1-2κ)/(1+κ)]."""
    terms = relaxed_chernoff_terms(n, eps)
    lo, hi = terms.upper_interval
    if not lo <= x <= hi:
        return 1.0 + eps
    return terms.gamma(1.0, x)


def relaxed_chernoff_lower(n: float, eps: float, x: float) -> float:
    """Gamma- at frequency x; -eps outside [3κ/(1+κ), 1]."""
    terms = relaxed_chernoff_terms(n, eps)
    lo, hi = terms.lower_interval
    if not lo <= x <= hi:
        return -eps
    return terms.gamma(-1.0, x)


def relaxed_chernoff_upper_slope(n: float, eps: float, x: float) -> float:
    """d Gamma+/dx inside the valid interval."""
    k = relaxed_chernoff_terms(n, eps).kappa
    inner = k * (k + x - x * x)
    if inner <= 0.0:
        return (1.0 - 2.0 * k) / (1.0 + 4.0 * k)
    return ((1.0 - 2.0 * k) + 3.0 * k * (1.0 - 2.0 * x) / (2.0 * math.sqrt(inner))) / (
        1.0 + 4.0 * k
    )


def gamma_bound(
    direction: Union[Direction, str],
    sample: BernoulliSample,
    eps: float,
    clamp: bool = False,
) -> float:
    """Relaxed-Chernoff confidence bound on the Bernoulli mean.

    Sentinels (-eps below, 1 + eps above) are returned as is unless clamp is set,
    in which case the results are max{0, gamma-} and min{1, gamma+}.
    """
    direction = Direction(direction)
    if direction is Direction.UPPER:
        value = relaxed_chernoff_upper(sample.n, eps, sample.p_hat)
        return min(1.0, value) if clamp else value
    value = relaxed_chernoff_lower(sample.n, eps, sample.p_hat)
    return max(0.0, value) if clamp else value


@dataclass(frozen=True)
class MultChernoffTerms:
    """Deviations of the multiplicative Chernoff bound around an observed count."""

    c_xy: float
    delta_plus: float
    delta_minus: float


def _upper_root(c: float) -> float:
    """s >= 1 with s - ln s = c."""
    if c > _MULT_CHERNOFF_C_MAX:
        s = c + math.log(c)
        for _ in range(50):
            s_next = c + math.log(s)
            if abs(s_next - s) <= 1e-15 * s_next:
                return s_next
            s = s_next
        return s
    return -lambert_w(LambertBranch.LOWER, -math.exp(-c))


def _lower_root(c: float) -> float:
    """r <= 1 with r - ln r = c."""
    if c > _MULT_CHERNOFF_C_MAX:
        return 0.0
    return -lambert_w(LambertBranch.PRINCIPAL, -math.exp(-c))


def mult_chernoff_terms(x: float, eps: float) -> MultChernoffTerms:
    """Upper deviation from the W_{-1} branch, lower deviation from W_0.

    At x = 0 the upper deviation is ln(1/eps) and the lower one vanishes.
    """
    log_inv = _log_inv(eps)
    if x < 0:
        raise DomainError(f"multiplicative Chernoff needs x >= 0, got {x}")
    if x == 0:
        return MultChernoffTerms(c_xy=math.inf, delta_plus=log_inv, delta_minus=0.0)
    t = log_inv / x
    c = 1.0 + t
    if t < _MULT_CHERNOFF_SERIES_T:
        root = math.sqrt(2.0 * t)
        return MultChernoffTerms(
            c_xy=c, delta_plus=x * (root + 2.0 * t / 3.0), delta_minus=x * (root - 2.0 * t / 3.0)
        )
    delta_plus = x * max(_upper_root(c) - 1.0, 0.0)
    delta_minus = x * max(1.0 - _lower_root(c), 0.0)
    return MultChernoffTerms(c_xy=c, delta_plus=delta_plus, delta_minus=delta_minus)


@dataclass(frozen=True)
class BetaBoundTerms:
    """Switch point between the linear and inverse-beta branches of the optimal lower bound."""

    eps_star: float
    delta_shift: float = CP_DELTA_SHIFT


def beta_bound_terms(count: int, n: int, delta_shift: float = CP_DELTA_SHIFT) -> BetaBoundTerms:
    if count <= 0:
        return BetaBoundTerms(eps_star=0.0, delta_shift=delta_shift)
    eps_star = reg_inc_beta((count - 1) / n, count, n - count + 1)
    return BetaBoundTerms(eps_star=eps_star, delta_shift=delta_shift)


def _optimal_lower(
    count: int, n: int, eps: float, precision: Optional[PrecisionConfig]
) -> float:
    if count == 0:
        return 0.0
    terms = beta_bound_terms(count, n)
    if eps >= terms.eps_star:
        if 1.0 - terms.eps_star <= np.finfo(float).eps:
            raise DomainError(
                f"linear branch undefined: eps*={terms.eps_star} is 1 for count={count}, n={n}"
            )
        return count / n - (1.0 - eps) / (n * (1.0 - terms.eps_star))
    return reg_inc_beta(eps, count, n - count + 1, inverse=True, precision=precision)


def cp_binomial(
    direction: Union[Direction, str],
    sample: BernoulliSample,
    eps: float,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Tightest monotone one-sided confidence bound on the Bernoulli mean."""
    direction = Direction(direction)
    if not 0.0 < eps <= CP_MAX_EPS:
        raise DomainError(f"cp_binomial needs eps in (0, 1/4], got {eps}")
    if not sample.is_integral:
        raise DomainError(
            f"cp_binomial needs integer counts, got x={sample.x}, n={sample.n}"
        )
    n, count = int(sample.n), int(sample.x)
    if direction is Direction.LOWER:
        return _optimal_lower(count, n, eps, precision)
    return 1.0 - _optimal_lower(n - count, n, eps, precision)


def bernoulli_interval(
    kind: Union[BernoulliBoundKind, str],
    direction: Union[Direction, str],
    eps: float,
    count: float,
    total: float,
    delta_shift: float = CP_DELTA_SHIFT,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """B-(eps, count, total) or B+(eps, count, total) for the selected family.

    The result is a count. Relaxed-Chernoff sentinels propagate (-eps * total,
    (1 + eps) * total) and Hoeffding bounds are not clamped.
    """
    kind = BernoulliBoundKind(kind)
    direction = Direction(direction)
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"{kind.value}: eps must lie in (0, 1], got {eps}")
    if total < 0 or count < 0 or count > total * (1.0 + COUNT_TOLERANCE):
        raise DomainError(
            f"{kind.value}: need 0 <= count <= total, got count={count}, total={total}"
        )
    if total == 0:
        return 0.0
    count = min(count, total)
    upper = direction is Direction.UPPER

    if kind is BernoulliBoundKind.RELAXED_CHERNOFF:
        return total * gamma_bound(direction, BernoulliSample(total, count), eps)

    if kind is BernoulliBoundKind.MULT_CHERNOFF:
        terms = mult_chernoff_terms(count, eps)
        return count + terms.delta_plus if upper else count - terms.delta_minus

    if kind is BernoulliBoundKind.HOEFFDING:
        deviation = math.sqrt(total / 2.0 * _log_inv(eps))
        return count + deviation if upper else count - deviation

    if eps > CP_MAX_EPS:
        raise DomainError(f"{kind.value}: eps must lie in (0, 1/4], got {eps}")
    # expected-value counts are rounded away from the bound
    whole = math.ceil(count) if upper else math.floor(count)
    n_int = max(int(round(total)), math.ceil(count), 1)
    whole = min(whole, n_int)
    value = cp_binomial(direction, BernoulliSample(n_int, whole), eps, precision)
    return n_int * (value + delta_shift) if upper else n_int * (value - delta_shift)
