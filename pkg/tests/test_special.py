import math

import numpy as np
import pytest
from scipy import special as sc

from backend.common.errors import ConfigurationError, DomainError
from backend.numerics.precision import (
    ENV_MAX_ITER,
    ENV_REL_TOL,
    LogProb,
    PrecisionConfig,
    get_precision,
    precision_from_env,
    set_precision,
)
from backend.numerics.special import (
    INV_E,
    LambertBranch,
    binary_entropy,
    lambert_w,
    log_binomial,
    log_factorial,
    reg_inc_beta,
)


def test_log_binomial_examples() -> None:
    assert log_binomial(5, 0) == 0.0
    assert log_binomial(4, 4) == 0.0
    assert log_binomial(10, 5) == pytest.approx(math.log(252), rel=1e-14)


@pytest.mark.parametrize("a,b", [(1, 1), (20, 7), (200, 100), (5000, 13)])
def test_log_binomial_matches_integer_arithmetic(a: int, b: int) -> None:
    assert log_binomial(a, b) == pytest.approx(math.log(math.comb(a, b)), rel=1e-12)


def test_log_binomial_above_table_cap() -> None:
    small_table = PrecisionConfig(lgamma_cap=10)
    expected = math.log(math.comb(50, 20))
    assert log_binomial(50, 20, small_table) == pytest.approx(expected, rel=1e-10)
    assert log_factorial(30, small_table) == pytest.approx(math.lgamma(31), rel=1e-12)


@pytest.mark.parametrize("a,b", [(3, 4), (3, -1), (-1, 0)])
def test_log_binomial_domain(a: int, b: int) -> None:
    with pytest.raises(DomainError):
        log_binomial(a, b)


def test_log_factorial() -> None:
    assert log_factorial(0) == 0.0
    assert log_factorial(10) == pytest.approx(math.log(3628800), rel=1e-14)
    with pytest.raises(DomainError):
        log_factorial(-1)


def test_lambert_w_examples() -> None:
    assert lambert_w(LambertBranch.PRINCIPAL, 0.0) == 0.0
    assert lambert_w(LambertBranch.PRINCIPAL, -INV_E) == -1.0
    assert lambert_w("lower", -INV_E) == -1.0
    assert lambert_w(LambertBranch.PRINCIPAL, 1.0) == pytest.approx(0.5671432904097838, rel=1e-14)


@pytest.mark.parametrize("x", [-0.36, -0.2, -1e-3, 1e-8, 0.5, 1.0, 3.0, 50.0, 1e6])
def test_lambert_w_principal_residual(x: float) -> None:
    w = lambert_w(LambertBranch.PRINCIPAL, x)
    assert abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))
    assert w == pytest.approx(sc.lambertw(x, 0).real, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("x", [-0.3678, -0.3, -0.1, -1e-3, -1e-10, -1e-100])
def test_lambert_w_lower_residual(x: float) -> None:
    w = lambert_w(LambertBranch.LOWER, x)
    assert w <= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)
    assert w == pytest.approx(sc.lambertw(x, -1).real, rel=1e-10)


NEAR_BRANCH_POINT = list(-INV_E * (1.0 - np.logspace(-12, -0.5, 24)))
NEGATIVE_DECADES = list(-np.logspace(-300, -1, 60))
POSITIVE_DECADES = list(np.logspace(-300, 300, 121))


@pytest.mark.parametrize("x", NEAR_BRANCH_POINT + NEGATIVE_DECADES + POSITIVE_DECADES)
def test_lambert_w_principal_residual_on_log_grid(x: float) -> None:
    w = lambert_w(LambertBranch.PRINCIPAL, x)
    assert w >= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))


@pytest.mark.parametrize("x", NEAR_BRANCH_POINT + NEGATIVE_DECADES)
def test_lambert_w_lower_residual_on_log_grid(x: float) -> None:
    w = lambert_w(LambertBranch.LOWER, x)
    assert w <= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)


def test_lambert_w_domain() -> None:
    with pytest.raises(DomainError):
        lambert_w(LambertBranch.PRINCIPAL, -0.5)
    with pytest.raises(DomainError):
        lambert_w(LambertBranch.LOWER, 0.1)
    with pytest.raises(DomainError):
        lambert_w(LambertBranch.PRINCIPAL, math.inf)


def test_reg_inc_beta_examples() -> None:
    assert reg_inc_beta(0.5, 1.0, 3.0) == pytest.approx(0.875, rel=1e-14)
    assert reg_inc_beta(0.0, 2.0, 5.0) == 0.0
    forward = reg_inc_beta(0.3, 2.5, 7.0)
    assert reg_inc_beta(forward, 2.5, 7.0, inverse=True) == pytest.approx(0.3, abs=1e-10)


BETA_SHAPES = [1.0, 10.0, 100.0, 1e3, 1e4]


@pytest.mark.parametrize("target", [1e-12, 1e-9, 1e-6, 1e-3, 0.1, 0.5])
@pytest.mark.parametrize("b", BETA_SHAPES)
@pytest.mark.parametrize("a", BETA_SHAPES)
def test_reg_inc_beta_inverse_residual(a: float, b: float, target: float) -> None:
    y = reg_inc_beta(target, a, b, inverse=True)
    assert 0.0 <= y <= 1.0
    assert abs(sc.betainc(a, b, y) - target) <= 1e-10


def test_reg_inc_beta_inverse_small_shapes() -> None:
    for a, b, target in [(0.5, 0.5, 0.7), (3.0, 8.0, 1e-9), (400.0, 3.0, 1e-6)]:
        y = reg_inc_beta(target, a, b, inverse=True)
        assert abs(sc.betainc(a, b, y) - target) <= 1e-10


def test_reg_inc_beta_domain() -> None:
    with pytest.raises(DomainError):
        reg_inc_beta(1.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        reg_inc_beta(0.5, 0.0, 1.0)


def test_binary_entropy() -> None:
    assert binary_entropy(0.5) == pytest.approx(1.0, rel=1e-15)
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    p = 0.0455
    expected = -p * math.log2(p) - (1 - p) * math.log2(1 - p)
    assert binary_entropy(p) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(DomainError):
        binary_entropy(1.1)


def test_binary_entropy_symmetric() -> None:
    xs = np.linspace(0.01, 0.49, 25)
    for x in xs:
        assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), rel=1e-13)


@pytest.fixture
def fresh_env_precision():
    precision_from_env.cache_clear()
    yield
    precision_from_env.cache_clear()


def test_precision_from_environment(monkeypatch, fresh_env_precision) -> None:
    monkeypatch.setenv(ENV_REL_TOL, "1e-10")
    monkeypatch.setenv(ENV_MAX_ITER, "50")
    config = get_precision()
    assert config.rel_tol == 1e-10
    assert config.max_iter == 50

    override = PrecisionConfig(rel_tol=1e-8)
    set_precision(override)
    assert get_precision() is override
    explicit = PrecisionConfig(max_iter=7)
    assert get_precision(explicit) is explicit


def test_precision_rejects_bad_environment(monkeypatch, fresh_env_precision) -> None:
    monkeypatch.setenv(ENV_REL_TOL, "tight")
    with pytest.raises(ConfigurationError):
        precision_from_env()
    with pytest.raises(ConfigurationError):
        PrecisionConfig(rel_tol=0.1)


def test_log_prob() -> None:
    assert LogProb.from_log(1e-17).value == 0.0
    assert LogProb.impossible().prob == 0.0
    assert LogProb.certain().prob == 1.0
    with pytest.raises(DomainError):
        LogProb(0.5)
