"""Special functions used by the bound families.

Log-binomials come from a memoized log-factorial table, the Lambert W branches
from a bracketed Halley iteration, and the regularized incomplete beta function
from scipy with a safeguarded Newton polish on the inverse.
"""

import logging
import math
import operator
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import special as sc

from backend.common.errors import DomainError, NumericError
from backend.numerics.precision import PrecisionConfig, get_precision

logger = logging.getLogger(__name__)

INV_E = math.exp(-1.0)
_LN2 = math.log(2.0)
_DBL_EPS = np.finfo(float).eps
# x values this close below -1/e are treated as the branch point.
_BRANCH_POINT_SLACK = 1e-15


class LambertBranch(Enum):
    """Real branches of the Lambert W function."""

    PRINCIPAL = "principal"
    LOWER = "lower"


@lru_cache(maxsize=4)
def _log_factorial_table(cap: int) -> np.ndarray:
    table = sc.gammaln(np.arange(cap + 1, dtype=float) + 1.0)
    table.flags.writeable = False
    return table


def log_factorial(k: int, precision: Optional[PrecisionConfig] = None) -> float:
    """ln k! from the memoized table, log-gamma above the cap."""
    k = operator.index(k)
    if k < 0:
        raise DomainError(f"log_factorial needs k >= 0, got {k}")
    cap = get_precision(precision).lgamma_cap
    if k <= cap:
        return float(_log_factorial_table(cap)[k])
    return float(sc.gammaln(k + 1.0))


def log_binomial(a: int, b: int, precision: Optional[PrecisionConfig] = None) -> float:
    """ln C(a, b); exactly 0 for b in {0, a}."""
    a = operator.index(a)
    b = operator.index(b)
    if a < 0 or b < 0 or b > a:
        raise DomainError(f"log_binomial needs 0 <= b <= a, got a={a}, b={b}")
    if b in (0, a):
        return 0.0
    cap = get_precision(precision).lgamma_cap
    if a <= cap:
        table = _log_factorial_table(cap)
        return float(table[a] - table[b] - table[a - b])
    return float(-math.log(a + 1.0) - sc.betaln(a - b + 1.0, b + 1.0))


def _lambert_initial_guess(branch: LambertBranch, x: float) -> float:
    # series around the branch point -1/e
    if abs(x + INV_E) < 0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        sign = 1.0 if branch is LambertBranch.PRINCIPAL else -1.0
        return -1.0 + sign * p - p * p / 3.0 + sign * 11.0 / 72.0 * p**3
    if branch is LambertBranch.LOWER:
        lx = math.log(-x)
        return lx - math.log(-lx)
    if x < 3.0:
        return math.log1p(x) * 0.6 if x > 0 else x
    lx = math.log(x)
    return lx - math.log(lx)


def _lambert_bracket(branch: LambertBranch, x: float):
    if branch is LambertBranch.PRINCIPAL:
        if x < 0:
            return -1.0, 0.0
        return 0.0, max(math.log1p(x), _DBL_EPS)
    # W_{-1}(-exp(-u-1)) lies between -1-sqrt(2u)-u and -1
    u = -math.log(-x) - 1.0
    return -2.0 - math.sqrt(2.0 * u) - u, -1.0


def lambert_w(
    branch: Union[LambertBranch, str],
    x: float,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Real Lambert W on the principal (W0) or lower (W-1) branch.

    Returns w with w * exp(w) = x. Halley steps that leave the current bracket
    are replaced by bisection.
    """
    branch = LambertBranch(branch)
    precision = get_precision(precision)
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"lambert_w needs a finite argument, got {x}")
    if x < -INV_E:
        if x >= -INV_E * (1.0 + _BRANCH_POINT_SLACK):
            return -1.0
        raise DomainError(f"lambert_w is real only for x >= -1/e, got {x}")
    if branch is LambertBranch.LOWER and x >= 0.0:
        raise DomainError(f"lower branch needs -1/e <= x < 0, got {x}")
    if x == 0.0:
        return 0.0
    if x == -INV_E:
        return -1.0

    lo, hi = _lambert_bracket(branch, x)
    w = min(max(_lambert_initial_guess(branch, x), lo), hi)
    for _ in range(precision.max_iter):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            return w
        if f > 0.0:
            if branch is LambertBranch.PRINCIPAL:
                hi = w
            else:
                lo = w
        else:
            if branch is LambertBranch.PRINCIPAL:
                lo = w
            else:
                hi = w
        wp1 = w + 1.0
        if wp1 == 0.0:
            w_new = 0.5 * (lo + hi)
        else:
            w_new = w - f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        if not lo <= w_new <= hi:
            w_new = 0.5 * (lo + hi)
        step = w_new - w
        w = w_new
        if abs(step) <= 1e-3 * precision.rel_tol * abs(w):
            return w
        if abs(f) <= 8.0 * _DBL_EPS * abs(x):
            return w
        if hi - lo <= 1e-3 * precision.rel_tol * abs(w):
            return w
    raise NumericError(
        f"lambert_w({branch.value}, {x}) did not converge in {precision.max_iter} iterations"
    )


def reg_inc_beta(
    x: float,
    a: float,
    b: float,
    inverse: bool = False,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Regularized incomplete beta I_x(a, b), or its inverse in x when inverse=True."""
    if not (a > 0.0 and b > 0.0 and math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"reg_inc_beta needs a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"reg_inc_beta needs x in [0, 1], got {x}")
    if not inverse:
        return float(sc.betainc(a, b, x))
    return _inverse_reg_inc_beta(x, a, b, get_precision(precision))


def _inverse_reg_inc_beta(
    target: float, a: float, b: float, precision: PrecisionConfig
) -> float:
    if target == 0.0:
        return 0.0
    if target == 1.0:
        return 1.0
    log_beta = float(sc.betaln(a, b))
    lo, hi = 0.0, 1.0
    y = float(sc.betaincinv(a, b, target))
    if not 0.0 < y < 1.0:
        y = 0.5
    for _ in range(precision.max_iter):
        g = float(sc.betainc(a, b, y)) - target
        if abs(g) <= 4.0 * _DBL_EPS * target:
            return y
        if g > 0.0:
            hi = y
        else:
            lo = y
        log_density = (a - 1.0) * math.log(y) + (b - 1.0) * math.log1p(-y) - log_beta
        density = math.exp(log_density) if log_density < 700.0 else math.inf
        y_new = y - g / density if density > 0.0 else 0.5 * (lo + hi)
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        step = y_new - y
        y = y_new
        if abs(step) <= precision.rel_tol * y or hi - lo <= precision.rel_tol * y:
            return y
    raise NumericError(
        f"inverse incomplete beta for (eps={target}, a={a}, b={b}) did not converge"
    )


def binary_entropy(x: float) -> float:
    """h(x) in bits with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary_entropy needs x in [0, 1], got {x}")
    return float((sc.entr(x) + sc.entr(1.0 - x)) / _LN2)
