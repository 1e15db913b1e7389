"""Log-domain hypergeometric tail evaluation and seeded sampling."""

import math
import operator
from typing import Optional, Union

import numpy as np
from scipy import stats

from backend.common.errors import DomainError
from backend.numerics.precision import LogProb

# pmf terms farther than this many standard deviations (plus a fixed pad) from
# the summation start are below double-precision relevance.
_WINDOW_SIGMAS = 40.0
_WINDOW_PAD = 64


def support(N: int, K: int, n: int) -> tuple:
    """Smallest and largest attainable counts of Hypergeometric(N, K, n)."""
    return max(0, n - (N - K)), min(n, K)


def _validate(N: int, K: int, n: int) -> tuple:
    try:
        N, K, n = operator.index(N), operator.index(K), operator.index(n)
    except TypeError as exc:
        raise DomainError(f"hypergeometric parameters must be integers: {exc}") from exc
    if N < 0 or not 0 <= K <= N or not 0 <= n <= N:
        raise DomainError(
            f"hypergeometric needs 0 <= K <= N and 0 <= n <= N, got N={N}, K={K}, n={n}"
        )
    return N, K, n


def _mode(N: int, K: int, n: int) -> int:
    return (n + 1) * (K + 1) // (N + 2)


def _window(N: int, K: int, n: int) -> int:
    if N <= 1:
        return _WINDOW_PAD
    var = n * (K / N) * (1.0 - K / N) * (N - n) / (N - 1)
    return int(math.ceil(_WINDOW_SIGMAS * math.sqrt(max(var, 0.0)))) + _WINDOW_PAD


def hg_log_pmf(N: int, K: int, n: int, ks: np.ndarray) -> np.ndarray:
    """ln Pr[X = k] for an array of counts, relative-accurate where pmf > 0."""
    ks = np.asarray(ks)
    pmf = stats.hypergeom.pmf(ks, N, K, n)
    with np.errstate(divide="ignore"):
        log_terms = np.log(pmf)
    underflow = pmf <= 0.0
    if np.any(underflow):
        log_terms[underflow] = stats.hypergeom.logpmf(ks[underflow], N, K, n)
    return log_terms


def _log_sum(log_terms: np.ndarray) -> float:
    if log_terms.size == 0:
        return -math.inf
    peak = float(np.max(log_terms))
    if peak == -math.inf:
        return -math.inf
    return peak + math.log(math.fsum(np.exp(log_terms - peak).tolist()))


def hg_log_cmf(N: int, K: int, n: int, x: Union[int, float]) -> LogProb:
    """ln Pr[X <= x] for X ~ Hypergeometric(N, K, n).

    Below the mode the lower tail is summed directly; at or above it the upper
    tail (which never contains the mode) is summed and complemented with log1p.
    """
    N, K, n = _validate(N, K, n)
    if isinstance(x, float):
        if not x.is_integer():
            raise DomainError(f"hg_log_cmf needs an integer count, got {x}")
        x = int(x)
    x = operator.index(x)
    lo, hi = support(N, K, n)
    if x < lo:
        return LogProb.impossible()
    if x >= hi:
        return LogProb.certain()

    width = _window(N, K, n)
    if x < _mode(N, K, n):
        ks = np.arange(max(lo, x - width), x + 1)
        return LogProb.from_log(_log_sum(hg_log_pmf(N, K, n, ks)))
    ks = np.arange(x + 1, min(hi, x + 1 + width) + 1)
    upper = math.exp(_log_sum(hg_log_pmf(N, K, n, ks)))
    if upper >= 1.0:
        return LogProb.impossible()
    return LogProb.from_log(math.log1p(-upper))


def hg_generator(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream_id)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_id])))


def hg_draw(
    seed: int, N: int, K: int, n: int, size: Optional[int] = None, stream_id: int = 0
):
    """Draw(s) from Hypergeometric(N, K, n); identical arguments give identical draws."""
    N, K, n = _validate(N, K, n)
    rng = hg_generator(seed, stream_id)
    draws = rng.hypergeometric(K, N - K, n, size=size)
    if size is None:
        return int(draws)
    return draws
