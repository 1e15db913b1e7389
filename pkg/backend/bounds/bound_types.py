"""Enumerations selecting bound families and evaluation modes."""

from enum import Enum


class Direction(Enum):
    """Side of a one-sided confidence bound."""

    LOWER = "lower"
    UPPER = "upper"


class DivergenceMode(Enum):
    """Kullback-Leibler divergence or its rational relaxation."""

    EXACT = "exact"
    RELAXED = "relaxed"


class BernoulliBoundKind(Enum):
    """Confidence-bound families for independent Bernoulli trials."""

    RELAXED_CHERNOFF = "relaxed_chernoff"
    MULT_CHERNOFF = "mult_chernoff"
    HOEFFDING = "hoeffding"
    CLOPPER_PEARSON_BINOMIAL = "cp_binomial"


class SamplingBoundKind(Enum):
    """Threshold families for sampling without replacement."""

    RELAXED_CHERNOFF = "relaxed_chernoff"
    CLOPPER_PEARSON_HG = "cp_hg"
    SERFLING = "serfling"
    EKERT_COMBINED = "ekert"
    HUSH_SCOVEL = "hush_scovel"
    GREENE_WELLNER = "greene_wellner"

    @property
    def has_confidence_bound(self) -> bool:
        """False for the native threshold forms (Serfling, Ekert-combined)."""
        return self not in (SamplingBoundKind.SERFLING, SamplingBoundKind.EKERT_COMBINED)


class EkertDirection(Enum):
    """Optimization direction over the integer-constrained deviation grid.

    MAX_AS_PRINTED includes the grid point j = N, so its threshold always
    exceeds 1; MIN_TIGHTEST gives the informative threshold.
    """

    MAX_AS_PRINTED = "max_as_printed"
    MIN_TIGHTEST = "min_tightest"


DEFAULT_EKERT_DIRECTION = EkertDirection.MAX_AS_PRINTED
