"""Observed samples for the two sampling regimes."""

from dataclasses import dataclass
from typing import Optional

from backend.common.errors import DomainError

# relative slack for counts computed in floating point
COUNT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BernoulliSample:
    """x successes in n independent Bernoulli trials (real counts in expected-value mode)."""

    n: float
    x: float

    def __post_init__(self):
        if not self.n > 0:
            raise DomainError(f"trial count must be positive, got n={self.n}")
        if self.x < 0 or self.x > self.n * (1.0 + COUNT_TOLERANCE):
            raise DomainError(f"need 0 <= x <= n, got x={self.x}, n={self.n}")

    @property
    def p_hat(self) -> float:
        return min(self.x / self.n, 1.0)

    @property
    def is_integral(self) -> bool:
        return float(self.x).is_integer() and float(self.n).is_integer()


@dataclass(frozen=True)
class HGSetting:
    """Population of N bits with K ones, split into a test sample of n and its complement."""

    N: int
    n: int
    K: Optional[int] = None
    x: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.n <= self.N:
            raise DomainError(f"need 0 <= n <= N, got n={self.n}, N={self.N}")
        if self.K is not None and not 0 <= self.K <= self.N:
            raise DomainError(f"need 0 <= K <= N, got K={self.K}, N={self.N}")
        if self.x is not None:
            if not 0 <= self.x <= self.n:
                raise DomainError(f"need 0 <= x <= n, got x={self.x}, n={self.n}")
            if self.K is not None and not (
                self.x <= self.K and self.n - self.x <= self.N - self.K
            ):
                raise DomainError(
                    f"split x={self.x} of n={self.n} is impossible with K={self.K}, N={self.N}"
                )

    @property
    def p(self) -> Optional[float]:
        return None if self.K is None else self.K / self.N

    @property
    def p_hat(self) -> Optional[float]:
        return None if self.x is None or self.n == 0 else self.x / self.n

    @property
    def q_hat(self) -> Optional[float]:
        if self.K is None or self.x is None or self.n == self.N:
            return None
        return (self.K - self.x) / (self.N - self.n)
