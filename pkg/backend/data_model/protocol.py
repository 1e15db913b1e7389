"""Protocol inputs, channel model and finite-key results."""

import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from backend.bounds.bound_types import (
    DEFAULT_EKERT_DIRECTION,
    BernoulliBoundKind,
    EkertDirection,
    SamplingBoundKind,
)
from backend.common.errors import ConfigurationError
from backend.data_model.sample import COUNT_TOLERANCE

DEFAULT_LAMBDA_EC_FACTOR = 1.19


def _check_probability(value: float, field: str) -> None:
    if not 0.0 < value < 1.0:
        raise ConfigurationError(f"must lie in (0, 1), got {value}", field=field)


@dataclass(frozen=True)
class BBM92Inputs:
    """Block of N raw bits of which n are tested against the tolerated QBER p_th."""

    N: int
    n: int
    p_th: float = 0.0455
    lambda_ec_factor: float = DEFAULT_LAMBDA_EC_FACTOR
    eps_pe: float = 4e-16
    eps_cor: float = 1e-8
    eps_pa: float = 1e-8
    bound_kind: SamplingBoundKind = SamplingBoundKind.RELAXED_CHERNOFF
    ekert_direction: EkertDirection = DEFAULT_EKERT_DIRECTION

    def __post_init__(self):
        if not 0 < self.n < self.N:
            raise ConfigurationError(
                f"need 0 < n < N, got n={self.n}, N={self.N}", field="n"
            )
        if not 0.0 < self.p_th < 0.5:
            raise ConfigurationError(f"must lie in (0, 1/2), got {self.p_th}", field="p_th")
        if not self.lambda_ec_factor >= 1.0:
            raise ConfigurationError(
                f"must be >= 1, got {self.lambda_ec_factor}", field="lambda_ec_factor"
            )
        for name in ("eps_pe", "eps_cor", "eps_pa"):
            _check_probability(getattr(self, name), name)
        object.__setattr__(self, "bound_kind", SamplingBoundKind(self.bound_kind))
        object.__setattr__(self, "ekert_direction", EkertDirection(self.ekert_direction))


@dataclass(frozen=True)
class ChannelModel:
    """Lossy channel with dark counts and misalignment; eta overrides loss_db when set."""

    loss_db: float = 30.0
    p_d: float = 6e-7
    e_mis: float = 5e-3
    eta: Optional[float] = None

    def __post_init__(self):
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ConfigurationError(f"must lie in (0, 1], got {self.eta}", field="eta")
        if self.eta is None and not (math.isfinite(self.loss_db) and self.loss_db >= 0.0):
            raise ConfigurationError(f"must be finite and >= 0, got {self.loss_db}", field="loss_db")
        if not 0.0 <= self.p_d < 1.0:
            raise ConfigurationError(f"must lie in [0, 1), got {self.p_d}", field="p_d")
        if not 0.0 <= self.e_mis < 1.0:
            raise ConfigurationError(f"must lie in [0, 1), got {self.e_mis}", field="e_mis")

    @property
    def efficiency(self) -> float:
        if self.eta is not None:
            return self.eta
        return 10.0 ** (-self.loss_db / 10.0)

    def detection_rate(self, intensity: float) -> float:
        return 1.0 - (1.0 - 2.0 * self.p_d) * math.exp(-self.efficiency * intensity)

    def error_rate(self, intensity: float) -> float:
        return self.p_d + self.e_mis * (1.0 - math.exp(-self.efficiency * intensity))

    def expected_qber(self, intensities, probabilities) -> float:
        """Sum_k p_k e_k / Sum_k p_k D_k; 0 when nothing is detected."""
        detected = sum(p * self.detection_rate(k) for k, p in zip(intensities, probabilities))
        if detected <= 0.0:
            return 0.0
        errors = sum(p * self.error_rate(k) for k, p in zip(intensities, probabilities))
        return errors / detected


def split_block(N: float, q_x: float) -> Tuple[float, float]:
    """(N_z, N_x) with N_z = q_z^2 / (q_z^2 + q_x^2) * N."""
    q_z = 1.0 - q_x
    share = q_z * q_z / (q_z * q_z + q_x * q_x)
    N_z = share * N
    return N_z, N - N_z


@dataclass(frozen=True)
class DecoyInputs:
    """Three-intensity decoy-state BB84 with Z-basis key and X-basis test."""

    mu: float
    nu: float
    omega: float
    p_mu: float
    p_nu: float
    q_x: float
    N_z: float
    N_x: float
    theta_th: Optional[float] = None
    lambda_ec_factor: float = DEFAULT_LAMBDA_EC_FACTOR
    eps_pe: float = 4e-16
    eps_cor: float = 1e-8
    eps_pa: float = 1e-8
    delta: float = 1e-8
    sampling_kind: SamplingBoundKind = SamplingBoundKind.RELAXED_CHERNOFF
    bernoulli_kind: BernoulliBoundKind = BernoulliBoundKind.RELAXED_CHERNOFF
    ekert_direction: EkertDirection = DEFAULT_EKERT_DIRECTION

    def __post_init__(self):
        if not self.mu > self.nu > self.omega >= 0.0:
            raise ConfigurationError(
                f"need mu > nu > omega >= 0, got ({self.mu}, {self.nu}, {self.omega})",
                field="intensities",
            )
        if not self.denominator > 0.0:
            raise ConfigurationError(
                f"mu(nu-omega) - nu^2 + omega^2 = {self.denominator:.6g} must be positive",
                field="intensities",
            )
        _check_probability(self.p_mu, "p_mu")
        _check_probability(self.p_nu, "p_nu")
        if not self.p_omega > 0.0:
            raise ConfigurationError(
                f"p_mu + p_nu = {self.p_mu + self.p_nu} leaves no vacuum probability",
                field="p_nu",
            )
        _check_probability(self.q_x, "q_x")
        if not (self.N_z > 0 and self.N_x > 0):
            raise ConfigurationError(
                f"block sizes must be positive, got N_z={self.N_z}, N_x={self.N_x}", field="N"
            )
        if self.theta_th is not None and not 0.0 <= self.theta_th < 0.5:
            raise ConfigurationError(f"must lie in [0, 1/2), got {self.theta_th}", field="theta_th")
        if not self.lambda_ec_factor >= 1.0:
            raise ConfigurationError(
                f"must be >= 1, got {self.lambda_ec_factor}", field="lambda_ec_factor"
            )
        for name in ("eps_pe", "eps_cor", "eps_pa", "delta"):
            _check_probability(getattr(self, name), name)
        object.__setattr__(self, "sampling_kind", SamplingBoundKind(self.sampling_kind))
        object.__setattr__(self, "bernoulli_kind", BernoulliBoundKind(self.bernoulli_kind))
        object.__setattr__(self, "ekert_direction", EkertDirection(self.ekert_direction))

    @classmethod
    def from_block(cls, N: float, q_x: float, **kwargs) -> "DecoyInputs":
        N_z, N_x = split_block(N, q_x)
        return cls(q_x=q_x, N_z=N_z, N_x=N_x, **kwargs)

    @property
    def p_omega(self) -> float:
        return 1.0 - self.p_mu - self.p_nu

    @property
    def intensities(self) -> Tuple[float, float, float]:
        return self.mu, self.nu, self.omega

    @property
    def probabilities(self) -> Tuple[float, float, float]:
        return self.p_mu, self.p_nu, self.p_omega

    @property
    def denominator(self) -> float:
        return self.mu * (self.nu - self.omega) - self.nu**2 + self.omega**2

    @property
    def block_size(self) -> float:
        return self.N_z + self.N_x


@dataclass(frozen=True)
class ObservedCounts:
    """Per-intensity sifted counts (mu, nu, omega order) and X-basis errors."""

    n_z: Tuple[float, float, float]
    n_x: Tuple[float, float, float]
    m_x: Tuple[float, float, float]

    def __post_init__(self):
        for name in ("n_z", "n_x", "m_x"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 3 or any(v < 0 for v in values):
                raise ConfigurationError(
                    f"need three nonnegative counts, got {values}", field=name
                )
            object.__setattr__(self, name, values)
        for errors, detections in zip(self.m_x, self.n_x):
            if errors > detections * (1.0 + COUNT_TOLERANCE):
                raise ConfigurationError(
                    f"errors {errors} exceed detections {detections}", field="m_x"
                )

    @property
    def N_z(self) -> float:
        return sum(self.n_z)

    @property
    def N_x(self) -> float:
        return sum(self.n_x)

    @property
    def M_x(self) -> float:
        return sum(self.m_x)


@dataclass(frozen=True)
class DecoyBounds:
    """Single-photon estimates from the three-intensity decoy equations."""

    tau1: float
    n1z_l: float
    n1z_u: float
    n1x_l: float
    n1x_u: float
    m1x_l: float
    m1x_u: float
    phi1z_u: Optional[float] = None

    @property
    def e1x(self) -> float:
        if self.n1x_l <= 0.0:
            return math.inf
        return self.m1x_u / self.n1x_l

    def with_phase_error(self, phi1z_u: float) -> "DecoyBounds":
        return replace(self, phi1z_u=phi1z_u)


@dataclass(frozen=True)
class PEThresholds:
    """Parameter-estimation thresholds.

    The simple form tests n1z_l >= n1z_th and phi1z_u <= phi1z_th. The Ekert form
    additionally bounds every single-photon estimate and derives phi1z_th from
    the worst case over the (u, v) ranges.
    """

    n1z_th: float
    phi1z_th: float
    n1z_th_u: Optional[float] = None
    n1x_th_l: Optional[float] = None
    n1x_th_u: Optional[float] = None
    m1x_th_u: Optional[float] = None
    e1x_th: Optional[float] = None
    u_range: Optional[Tuple[float, float]] = None
    v_range: Optional[Tuple[float, float]] = None

    @property
    def is_ekert_form(self) -> bool:
        return self.m1x_th_u is not None

    def passes(self, bounds: DecoyBounds) -> bool:
        if self.is_ekert_form:
            return (
                bounds.n1z_l >= self.n1z_th
                and bounds.n1z_u <= self.n1z_th_u
                and bounds.n1x_l >= self.n1x_th_l
                and bounds.n1x_u <= self.n1x_th_u
                and bounds.m1x_u <= self.m1x_th_u
            )
        phi = bounds.phi1z_u
        return phi is not None and bounds.n1z_l >= self.n1z_th and phi <= self.phi1z_th


@dataclass(frozen=True)
class KeyResult:
    """Secret key length and composed security parameters.

    raw_length is the key-length expression before flooring and clamping.
    """

    l: int
    rate: float
    eps_sec: float
    eps_cor: float
    q_or_phi_threshold: float
    feasible: bool
    raw_length: float = -math.inf


def _field_values(record) -> dict:
    return {f.name: getattr(record, f.name) for f in fields(record)}


@dataclass(frozen=True)
class BBM92Template:
    """BBM92 inputs without the block and test sizes, which sweeps supply."""

    p_th: float = 0.0455
    lambda_ec_factor: float = DEFAULT_LAMBDA_EC_FACTOR
    eps_pe: float = 4e-16
    eps_cor: float = 1e-8
    eps_pa: float = 1e-8
    bound_kind: SamplingBoundKind = SamplingBoundKind.RELAXED_CHERNOFF
    ekert_direction: EkertDirection = DEFAULT_EKERT_DIRECTION

    def build(self, N: int, n: int) -> BBM92Inputs:
        return BBM92Inputs(N=N, n=n, **_field_values(self))


@dataclass(frozen=True)
class DecoyTemplate:
    """Decoy inputs without the parameters the optimizer tunes."""

    theta_th: Optional[float] = None
    lambda_ec_factor: float = DEFAULT_LAMBDA_EC_FACTOR
    eps_pe: float = 4e-16
    eps_cor: float = 1e-8
    eps_pa: float = 1e-8
    delta: float = 1e-8
    sampling_kind: SamplingBoundKind = SamplingBoundKind.RELAXED_CHERNOFF
    bernoulli_kind: BernoulliBoundKind = BernoulliBoundKind.RELAXED_CHERNOFF
    ekert_direction: EkertDirection = DEFAULT_EKERT_DIRECTION

    def build(
        self, N: float, mu: float, nu: float, omega: float, p_mu: float, p_nu: float, q_x: float
    ) -> DecoyInputs:
        return DecoyInputs.from_block(
            N, q_x, mu=mu, nu=nu, omega=omega, p_mu=p_mu, p_nu=p_nu, **_field_values(self)
        )
