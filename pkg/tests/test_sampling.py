import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from backend.bounds.bernoulli import relaxed_chernoff_upper
from backend.bounds.bound_types import EkertDirection, SamplingBoundKind
from backend.bounds.ekert import ekert_search, ekert_threshold
from backend.bounds.sampling import (
    confidence_upper,
    cp_plus_hg,
    greene_wellner_terms,
    gw_upper,
    hg_sample,
    hs_forward_z,
    hs_p_plus,
    hs_upper,
    serfling_dominance_ratio,
    slope_check,
    threshold,
)
from backend.common.errors import DomainError, InfeasibleError

CONFIDENCE_KINDS = [kind for kind in SamplingBoundKind if kind.has_confidence_bound]


def exact_cmf(N: int, K: int, n: int, x: int) -> Fraction:
    total = math.comb(N, n)
    hits = sum(math.comb(K, k) * math.comb(N - K, n - k) for k in range(0, x + 1))
    return Fraction(hits, total)


def max_conditional_failure(N: int, n: int, q_th: float, p_th: float) -> float:
    """max over K of Pr[q_hat >= q_th, p_hat <= p_th] by exact enumeration."""
    x_th = math.floor(n * p_th * (1.0 + 1e-12))
    Ks = np.arange(N + 1)
    x_max = np.minimum(x_th, np.floor(Ks - q_th * (N - n) + 1e-9))
    probs = np.where(x_max >= 0, stats.hypergeom.cdf(x_max, N, Ks, n), 0.0)
    return float(probs.max())


def max_outcome_failure(N: int, n: int, thresholds) -> float:
    """max over K of Pr[q_hat >= q_th(p_hat)], summing every sample count x with its own threshold."""
    xs = np.arange(n + 1)[None, :]
    Ks = np.arange(N + 1)[:, None]
    pmf = stats.hypergeom.pmf(xs, N, Ks, n)
    fails = Ks - xs >= np.asarray(thresholds)[None, :] * (N - n) - 1e-9
    return float(np.where(fails, pmf, 0.0).sum(axis=1).max())


def outcome_thresholds(kind: SamplingBoundKind, N: int, n: int, eps: float) -> list:
    values = []
    for x in range(n):
        try:
            values.append(
                threshold(kind, N, n, eps, x / n, ekert_direction=EkertDirection.MIN_TIGHTEST)
            )
        except InfeasibleError:
            values.append(math.inf)
    # p_hat = 1 leaves no room for q_hat above any threshold
    values.append(math.inf)
    return values


def test_hush_scovel_upper_at_zero_is_p_plus() -> None:
    N, n, eps = 10_000, 1_000, 1e-9
    assert hs_upper(N, n, eps, 0.0) == pytest.approx(hs_p_plus(N, n, eps), rel=1e-12)


def test_hush_scovel_upper_inverts_forward_z() -> None:
    N, n, eps = 10_000, 1_000, 1e-9
    for x in (0.0, 0.01, 0.03, 0.2):
        upper = hs_upper(N, n, eps, x)
        assert upper > x
        assert hs_forward_z(N, n, eps, upper) == pytest.approx(x, abs=1e-10)


def test_hush_scovel_sentinel_outside_valid_interval() -> None:
    assert hs_upper(10_000, 1_000, 1e-9, 1.0) == 1.0 + 1e-9


def test_greene_wellner_upper_direct() -> None:
    N, n, eps, x = 10_000, 1_000, 1e-9, 0.03
    pi = 2.0 * math.log(1.0 / eps) / (3.0 * n)
    s = 3.0 * pi * (1.0 - (n - 1.0) / (N - 1.0))
    inner = pi * pi + s * (s + 4.0 * x * (1.0 - x) + 2.0 * pi * (1.0 - 2.0 * x))
    expected = (s + 2.0 * x + pi + math.sqrt(inner)) / (2.0 * (1.0 + s))
    assert gw_upper(N, n, eps, x) == pytest.approx(expected, rel=1e-12)
    assert expected > x


def test_greene_wellner_sentinel() -> None:
    N, n, eps = 10_000, 1_000, 1e-9
    pi = greene_wellner_terms(N, n, eps).pi
    assert gw_upper(N, n, eps, 1.0 - pi / 2.0) == 1.0 + eps


def test_cp_plus_full_sampling_is_one_grid_step_up() -> None:
    for x in (0, 3, 19):
        assert cp_plus_hg(20, 20, 0.05, x / 20) == pytest.approx((x + 1) / 20)


def test_cp_plus_matches_exact_scan() -> None:
    N, n, eps, count = 100, 20, 0.01, 2
    expected = next(
        K for K in range(10, N + 1) if exact_cmf(N, K, n, count) <= Fraction(eps)
    )
    assert cp_plus_hg(N, n, eps, count / n) == expected / N


@pytest.mark.parametrize("N,n", [(40, 10), (120, 30), (500, 60)])
@pytest.mark.parametrize("eps", [0.05, 1e-3])
def test_cp_plus_is_never_looser_than_relaxed_chernoff(N: int, n: int, eps: float) -> None:
    for count in range(n + 1):
        cp = cp_plus_hg(N, n, eps, count / n)
        rc = relaxed_chernoff_upper(n, eps, count / n)
        assert cp <= (math.floor(N * rc) + 1) / N + 1e-12


def test_cp_plus_rejects_off_grid_estimate() -> None:
    with pytest.raises(DomainError):
        cp_plus_hg(100, 20, 0.01, 0.13)


def test_confidence_upper_has_no_native_threshold_forms() -> None:
    for kind in (SamplingBoundKind.SERFLING, SamplingBoundKind.EKERT_COMBINED):
        with pytest.raises(DomainError):
            confidence_upper(kind, 1000, 100, 1e-3, 0.1)


@pytest.mark.parametrize("kind", CONFIDENCE_KINDS)
def test_confidence_upper_coverage(kind: SamplingBoundKind) -> None:
    N, K, n, eps, draws = 1000, 100, 100, 0.05, 100_000
    counts = stats.hypergeom.rvs(N, K, n, size=draws, random_state=11)
    bounds = {int(c): confidence_upper(kind, N, n, eps, c / n) for c in np.unique(counts)}
    misses = np.mean([bounds[int(c)] < K / N for c in counts])
    assert misses <= eps + 5.0 * math.sqrt(eps / draws)


def test_serfling_threshold_without_budget_is_p_th() -> None:
    assert threshold(SamplingBoundKind.SERFLING, 1e5, 1e4, 1.0, 0.04) == 0.04


@pytest.mark.parametrize("p_th", [0.005, 0.04])
def test_threshold_ordering(p_th: float) -> None:
    N, n, eps = 100_000, 10_000, 1e-9
    q = {
        kind: threshold(kind, N, n, eps, p_th, ekert_direction=EkertDirection.MIN_TIGHTEST)
        for kind in SamplingBoundKind
    }
    assert q[SamplingBoundKind.CLOPPER_PEARSON_HG] <= q[SamplingBoundKind.RELAXED_CHERNOFF]
    assert q[SamplingBoundKind.RELAXED_CHERNOFF] < q[SamplingBoundKind.EKERT_COMBINED]
    assert q[SamplingBoundKind.EKERT_COMBINED] < q[SamplingBoundKind.SERFLING]
    assert all(value > p_th for value in q.values())


def test_cp_threshold_snaps_to_sample_grid() -> None:
    kind = SamplingBoundKind.CLOPPER_PEARSON_HG
    assert threshold(kind, 1000, 100, 1e-3, 0.0413) == threshold(kind, 1000, 100, 1e-3, 0.04)


def test_threshold_domain() -> None:
    with pytest.raises(DomainError):
        threshold(SamplingBoundKind.SERFLING, 1000, 1000, 1e-3, 0.1)
    with pytest.raises(DomainError):
        threshold(SamplingBoundKind.RELAXED_CHERNOFF, 1000, 100, 1e-3, 1.0)


@pytest.mark.parametrize("N,n", [(200, 50), (1000, 200)])
@pytest.mark.parametrize("eps", [1e-3, 1e-6])
@pytest.mark.parametrize("kind", list(SamplingBoundKind))
def test_threshold_conditional_failure_is_bounded(
    kind: SamplingBoundKind, N: int, n: int, eps: float
) -> None:
    p_th = 0.1
    if not slope_check(kind, N, n, eps, p_th, exhaustive=True):
        pytest.skip("threshold not monotone at this setting")
    try:
        q_th = threshold(kind, N, n, eps, p_th, ekert_direction=EkertDirection.MIN_TIGHTEST)
    except InfeasibleError:
        pytest.skip("no feasible Ekert deviation")
    assert max_conditional_failure(N, n, q_th, p_th) <= eps * (1.0 + 1e-6)


@pytest.mark.parametrize("N,n", [(200, 50), (1000, 200)])
@pytest.mark.parametrize("eps", [1e-3, 1e-6])
@pytest.mark.parametrize("kind", list(SamplingBoundKind))
def test_threshold_at_observed_rate_is_bounded(
    kind: SamplingBoundKind, N: int, n: int, eps: float
) -> None:
    thresholds = outcome_thresholds(kind, N, n, eps)
    assert max_outcome_failure(N, n, thresholds) <= eps * (1.0 + 1e-6)


def test_outcome_failure_counts_every_sample_count() -> None:
    N, n = 20, 5
    # q_hat >= 0 holds for every outcome
    always = max_outcome_failure(N, n, [0.0] * (n + 1))
    assert always == pytest.approx(1.0)
    never = max_outcome_failure(N, n, [math.inf] * (n + 1))
    assert never == 0.0


def test_slope_check() -> None:
    assert slope_check(SamplingBoundKind.RELAXED_CHERNOFF, 1e5, 1e4, 1e-9, 0.04)
    assert slope_check(SamplingBoundKind.CLOPPER_PEARSON_HG, 200, 50, 1e-3, 0.1, exhaustive=True)
    assert slope_check(SamplingBoundKind.SERFLING, 200, 50, 1e-3, 0.1)
    # p_th beyond the relaxed-Chernoff validity interval
    assert not slope_check(SamplingBoundKind.RELAXED_CHERNOFF, 100, 10, 1e-9, 0.1)


def test_hg_sample_degenerate_populations() -> None:
    assert hg_sample(3, 100, 0, 20) == 0
    assert hg_sample(3, 100, 100, 20) == 20
    assert hg_sample(3, 100, 40, 20) == hg_sample(3, 100, 40, 20)
    with pytest.raises(DomainError):
        hg_sample(3, 100, 101, 20)


def test_serfling_dominance_ratio() -> None:
    N, n, p, delta = 1e6, 1e3, 0.05, 0.01
    w = p - delta / 3.0
    expected = (N - n + 1.0) / (4.0 * N * w * (1.0 - w))
    ratio = serfling_dominance_ratio(N, n, p, delta)
    assert ratio == pytest.approx(expected, rel=1e-12)
    assert ratio > 1.0


def test_ekert_infeasible_for_tiny_budget() -> None:
    with pytest.raises(InfeasibleError):
        ekert_threshold(200, 50, 1e-30, 0.3)


def test_ekert_directions() -> None:
    N, n, eps, p_th = 100_000, 10_000, 1e-9, 0.04
    tight = ekert_search(N, n, eps, p_th, EkertDirection.MIN_TIGHTEST)
    printed = ekert_search(N, n, eps, p_th, EkertDirection.MAX_AS_PRINTED)
    assert tight.xi > 0.0
    assert tight.q_th > p_th + tight.xi
    assert printed.q_th >= tight.q_th
    assert printed.q_th > 1.0
    assert threshold(SamplingBoundKind.EKERT_COMBINED, N, n, eps, p_th) == printed.q_th
