"""Finite key length of three-intensity decoy-state BB84.

Single-photon counts and errors are bounded from the per-intensity
observations, the single-photon phase error rate of the key is bounded with
the selected sampling family, and the parameter-estimation test is run
against thresholds set at the channel-model expectations.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from backend.bounds.bernoulli import bernoulli_interval, relaxed_chernoff_upper
from backend.bounds.bound_types import Direction, SamplingBoundKind
from backend.bounds.ekert import ekert_threshold
from backend.bounds.sampling import confidence_upper, cp_plus_hg
from backend.common.errors import ConfigurationError, InfeasibleError
from backend.data_model.protocol import (
    ChannelModel,
    DecoyBounds,
    DecoyInputs,
    KeyResult,
    ObservedCounts,
    PEThresholds,
)
from backend.numerics.precision import PrecisionConfig
from backend.numerics.special import binary_entropy
from backend.protocols.channel import channel_expectations, default_theta_th

logger = logging.getLogger(__name__)

DEFAULT_BSET_RESOLUTION = 50

_EPS_MULTIPLIERS = {
    SamplingBoundKind.RELAXED_CHERNOFF: 16,
    SamplingBoundKind.CLOPPER_PEARSON_HG: 16,
    SamplingBoundKind.HUSH_SCOVEL: 16,
    SamplingBoundKind.GREENE_WELLNER: 16,
    SamplingBoundKind.SERFLING: 13,
    SamplingBoundKind.EKERT_COMBINED: 13,
}


def eps_multiplier(kind) -> int:
    """Number of individual bounds composing eps_pe for the family."""
    return _EPS_MULTIPLIERS[SamplingBoundKind(kind)]


def per_bound_eps(inputs: DecoyInputs) -> float:
    return inputs.eps_pe / eps_multiplier(inputs.sampling_kind)


def decoy_eps_sec(inputs: DecoyInputs) -> float:
    return 2.0 * (math.sqrt(inputs.eps_pe) + inputs.delta) + inputs.eps_pa


def tau_one(inputs: DecoyInputs) -> float:
    return sum(math.exp(-k) * k * p for k, p in zip(inputs.intensities, inputs.probabilities))


def _count_bounds(
    inputs: DecoyInputs,
    eps: float,
    counts: Sequence[float],
    total: float,
    precision: Optional[PrecisionConfig],
):
    """(lower, upper) Bernoulli bounds per intensity in (mu, nu, omega) order."""
    lower = [
        bernoulli_interval(inputs.bernoulli_kind, Direction.LOWER, eps, c, total, precision=precision)
        for c in counts
    ]
    upper = [
        bernoulli_interval(inputs.bernoulli_kind, Direction.UPPER, eps, c, total, precision=precision)
        for c in counts
    ]
    return lower, upper


def _lower_combination(inputs: DecoyInputs, tau1: float, lower, upper) -> float:
    mu, nu, omega = inputs.intensities
    p_mu, p_nu, p_omega = inputs.probabilities
    return (
        tau1
        * mu
        / inputs.denominator
        * (
            math.exp(nu) / p_nu * lower[1]
            - math.exp(omega) / p_omega * upper[2]
            - (nu**2 - omega**2) / mu**2 * math.exp(mu) / p_mu * upper[0]
        )
    )


def _upper_combination(inputs: DecoyInputs, tau1: float, lower, upper) -> float:
    _, nu, omega = inputs.intensities
    _, p_nu, p_omega = inputs.probabilities
    return (
        tau1
        / (nu - omega)
        * (math.exp(nu) / p_nu * upper[1] - math.exp(omega) / p_omega * lower[2])
    )


def _clamp(value: float, top: float) -> float:
    return min(max(value, 0.0), top)


def decoy_single_photon_bounds(
    counts: ObservedCounts,
    inputs: DecoyInputs,
    eps_each: float,
    precision: Optional[PrecisionConfig] = None,
) -> DecoyBounds:
    """Six single-photon estimates, each clamped to its physical range."""
    if inputs.denominator <= 0.0:
        raise ConfigurationError(
            f"decoy denominator {inputs.denominator:.6g} must be positive", field="intensities"
        )
    tau1 = tau_one(inputs)
    N_z, N_x, M_x = counts.N_z, counts.N_x, counts.M_x
    z_lo, z_hi = _count_bounds(inputs, eps_each, counts.n_z, N_z, precision)
    x_lo, x_hi = _count_bounds(inputs, eps_each, counts.n_x, N_x, precision)
    m_lo, m_hi = _count_bounds(inputs, eps_each, counts.m_x, M_x, precision)
    return DecoyBounds(
        tau1=tau1,
        n1z_l=_clamp(_lower_combination(inputs, tau1, z_lo, z_hi), N_z),
        n1z_u=_clamp(_upper_combination(inputs, tau1, z_lo, z_hi), N_z),
        n1x_l=_clamp(_lower_combination(inputs, tau1, x_lo, x_hi), N_x),
        n1x_u=_clamp(_upper_combination(inputs, tau1, x_lo, x_hi), N_x),
        m1x_l=_clamp(_lower_combination(inputs, tau1, m_lo, m_hi), M_x),
        m1x_u=_clamp(_upper_combination(inputs, tau1, m_lo, m_hi), M_x),
    )


def phase_error_upper(
    kind,
    bounds: DecoyBounds,
    eps: float,
    precision: Optional[PrecisionConfig] = None,
) -> float:
    """Upper bound on the single-photon phase error rate of the key.

    Returns inf when the single-photon error estimate m1x_u / n1x_l reaches 1.
    """
    kind = SamplingBoundKind(kind)
    if kind is SamplingBoundKind.EKERT_COMBINED:
        raise ConfigurationError(
            "ekert family uses the five-threshold test, see pe_thresholds", field="sampling_kind"
        )
    if bounds.n1x_l <= 0.0 or bounds.n1z_l <= 0.0:
        raise InfeasibleError(
            f"single-photon lower bounds vanish (n1x_l={bounds.n1x_l:.6g}, "
            f"n1z_l={bounds.n1z_l:.6g})"
        )
    x = bounds.m1x_u / bounds.n1x_l
    if x >= 1.0:
        return math.inf
    population = bounds.n1z_u + bounds.n1x_u

    if kind is SamplingBoundKind.SERFLING:
        spread = population * (bounds.n1x_u + 1.0) * -math.log(eps)
        return x + math.sqrt(spread / (2.0 * bounds.n1z_l * bounds.n1x_l**2))

    if kind is SamplingBoundKind.RELAXED_CHERNOFF:
        upper = relaxed_chernoff_upper(bounds.n1x_l, eps, x)
        return (population * upper - bounds.m1x_l) / bounds.n1z_l

    if kind is SamplingBoundKind.CLOPPER_PEARSON_HG:
        whole = math.ceil(population)
        tested = min(math.floor(bounds.n1x_l), whole)
        errors = math.ceil(bounds.m1x_u)
        if tested < 1:
            raise InfeasibleError(f"fewer than one tested single photon (n1x_l={bounds.n1x_l:.6g})")
        if errors >= tested:
            return math.inf
        upper_count = cp_plus_hg(whole, tested, eps, errors / tested, precision) * whole
        return (upper_count - bounds.m1x_l) / bounds.n1z_l

    if bounds.n1x_l < 1.0 or population < 2.0:
        raise InfeasibleError(f"population too small for {kind.value}: {population:.6g}")
    upper = confidence_upper(kind, population, bounds.n1x_l, eps, x, precision)
    return (population * upper - bounds.m1x_l) / bounds.n1z_l


def _safe_phase_error(kind, bounds: DecoyBounds, eps: float, precision) -> float:
    try:
        return phase_error_upper(kind, bounds, eps, precision)
    except InfeasibleError as exc:
        logger.debug("phase error bound infeasible: %s", exc)
        return math.inf


def _bset_axis(lo: float, hi: float, resolution: int) -> np.ndarray:
    if hi <= lo or lo <= 0.0:
        return np.array([hi])
    return np.unique(np.concatenate(([lo, hi], np.geomspace(lo, hi, resolution))))


def bset_worst_threshold(
    inputs: DecoyInputs,
    eps: float,
    e_th: float,
    u_range,
    v_range,
    resolution: int = DEFAULT_BSET_RESOLUTION,
) -> float:
    """Largest Ekert threshold at e_th over populations u and test sizes v with u > v."""
    if not 0.0 <= e_th < 1.0:
        return math.inf
    worst = -math.inf
    for u in _bset_axis(*u_range, resolution):
        for v in _bset_axis(*v_range, resolution):
            if not (u > v >= 1.0):
                continue
            try:
                value = ekert_threshold(u, v, eps, e_th, inputs.ekert_direction)
            except InfeasibleError:
                return math.inf
            worst = max(worst, value)
    return worst if worst > -math.inf else math.inf


def pe_thresholds(
    inputs: DecoyInputs,
    model: ChannelModel,
    bset_resolution: int = DEFAULT_BSET_RESOLUTION,
    precision: Optional[PrecisionConfig] = None,
) -> PEThresholds:
    """Thresholds at the channel-model expectations of every observable."""
    counts = channel_expectations(model, inputs)
    eps = per_bound_eps(inputs)
    bounds = decoy_single_photon_bounds(counts, inputs, eps, precision)
    if inputs.sampling_kind is not SamplingBoundKind.EKERT_COMBINED:
        return PEThresholds(
            n1z_th=bounds.n1z_l,
            phi1z_th=_safe_phase_error(inputs.sampling_kind, bounds, eps, precision),
        )
    u_range = (bounds.n1z_l + bounds.n1x_l, bounds.n1z_u + bounds.n1x_u)
    v_range = (bounds.n1x_l, bounds.n1x_u)
    e_th = bounds.e1x
    return PEThresholds(
        n1z_th=bounds.n1z_l,
        phi1z_th=bset_worst_threshold(inputs, eps, e_th, u_range, v_range, bset_resolution),
        n1z_th_u=bounds.n1z_u,
        n1x_th_l=bounds.n1x_l,
        n1x_th_u=bounds.n1x_u,
        m1x_th_u=bounds.m1x_u,
        e1x_th=e_th,
        u_range=u_range,
        v_range=v_range,
    )


def key_length_decoy(
    inputs: DecoyInputs,
    counts: ObservedCounts,
    thresholds: PEThresholds,
    model: Optional[ChannelModel] = None,
    precision: Optional[PrecisionConfig] = None,
) -> KeyResult:
    """Run the PE test on the observed counts and size the key on success.

    theta_th falls back to the expected QBER of model when the inputs leave it unset.
    """
    if inputs.theta_th is None and model is None:
        raise ConfigurationError("needs a value or a channel model", field="theta_th")
    theta = default_theta_th(model, inputs) if inputs.theta_th is None else inputs.theta_th
    eps = per_bound_eps(inputs)
    bounds = decoy_single_photon_bounds(counts, inputs, eps, precision)
    if not thresholds.is_ekert_form:
        bounds = bounds.with_phase_error(
            _safe_phase_error(inputs.sampling_kind, bounds, eps, precision)
        )
    passed = thresholds.passes(bounds)
    eps_sec = decoy_eps_sec(inputs)
    phi_th = thresholds.phi1z_th
    leak = inputs.lambda_ec_factor * inputs.N_z * binary_entropy(min(theta, 0.5))
    tag = math.log2(1.0 / (2.0 * inputs.eps_cor * inputs.eps_pa**2 * inputs.delta))
    raw = thresholds.n1z_th * (1.0 - binary_entropy(min(phi_th, 0.5))) - leak - tag
    if not passed or phi_th >= 0.5:
        if not passed:
            logger.debug("PE test failed for %s", inputs.sampling_kind.value)
        return KeyResult(
            l=0, rate=0.0, eps_sec=eps_sec, eps_cor=inputs.eps_cor,
            q_or_phi_threshold=phi_th, feasible=False, raw_length=raw,
        )
    length = max(0, math.floor(raw))
    return KeyResult(
        l=length,
        rate=length / inputs.block_size,
        eps_sec=eps_sec,
        eps_cor=inputs.eps_cor,
        q_or_phi_threshold=phi_th,
        feasible=length > 0,
        raw_length=raw,
    )


def evaluate_decoy(
    inputs: DecoyInputs,
    model: ChannelModel,
    bset_resolution: int = DEFAULT_BSET_RESOLUTION,
    precision: Optional[PrecisionConfig] = None,
) -> KeyResult:
    """Key length when the observations equal their channel-model expectations."""
    thresholds = pe_thresholds(inputs, model, bset_resolution, precision)
    counts = channel_expectations(model, inputs)
    return key_length_decoy(inputs, counts, thresholds, model, precision)
