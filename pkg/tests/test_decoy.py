import math
from dataclasses import replace

import pytest

from backend.bounds.bound_types import BernoulliBoundKind, EkertDirection, SamplingBoundKind
from backend.common.errors import ConfigurationError
from backend.data_model.protocol import ChannelModel, DecoyInputs, DecoyTemplate, ObservedCounts
from backend.data_model.sweep import DecoyParams
from backend.protocols.channel import channel_expectations
from backend.protocols.decoy import (
    decoy_eps_sec,
    decoy_single_photon_bounds,
    eps_multiplier,
    evaluate_decoy,
    key_length_decoy,
    pe_thresholds,
    per_bound_eps,
    phase_error_upper,
    tau_one,
)


def _build(template: DecoyTemplate, params: DecoyParams, omega: float, N: float = 1e9) -> DecoyInputs:
    return template.build(N, params.mu, params.nu, omega, params.p_mu, params.p_nu, params.q_x)


def test_eps_multipliers() -> None:
    for kind in SamplingBoundKind:
        expected = 13 if kind in (SamplingBoundKind.SERFLING, SamplingBoundKind.EKERT_COMBINED) else 16
        assert eps_multiplier(kind) == expected


def test_secrecy_composition(decoy_template, decoy_params, omega) -> None:
    inputs = _build(decoy_template, decoy_params, omega)
    assert decoy_eps_sec(inputs) == pytest.approx(7e-8, rel=1e-12)
    assert per_bound_eps(inputs) == pytest.approx(4e-16 / 16, rel=1e-12)


def test_tau_one(decoy_template, decoy_params, omega) -> None:
    inputs = _build(decoy_template, decoy_params, omega)
    expected = 0.6 * 0.5 * math.exp(-0.5) + 0.3 * 0.1 * math.exp(-0.1) + 0.1 * omega * math.exp(-omega)
    assert tau_one(inputs) == pytest.approx(expected, rel=1e-12)


def test_single_photon_bounds_bracket_the_channel_truth(
    channel_model: ChannelModel, decoy_template, decoy_params, omega
) -> None:
    template = replace(decoy_template, bernoulli_kind=BernoulliBoundKind.HOEFFDING)
    inputs = _build(template, decoy_params, omega)
    counts = channel_expectations(channel_model, inputs)
    # without statistical slack only the decoy estimation gap remains
    bounds = decoy_single_photon_bounds(counts, inputs, 1.0)

    eta, p_d, e_mis = channel_model.efficiency, channel_model.p_d, channel_model.e_mis
    norm = sum(p * channel_model.detection_rate(k) for k, p in zip(inputs.intensities, inputs.probabilities))
    yield_one = 1.0 - (1.0 - 2.0 * p_d) * (1.0 - eta)
    tau1 = tau_one(inputs)
    n1z = inputs.N_z * tau1 * yield_one / norm
    n1x = inputs.N_x * tau1 * yield_one / norm
    m1x = inputs.N_x * tau1 * (p_d + e_mis * eta) / norm

    assert bounds.n1z_l <= n1z * (1.0 + 1e-9)
    assert bounds.n1z_u >= n1z * (1.0 - 1e-9)
    assert bounds.n1x_l <= n1x * (1.0 + 1e-9)
    assert bounds.m1x_u >= m1x * (1.0 - 1e-9)
    assert bounds.n1z_l > 0.5 * n1z


def test_statistical_slack_widens_bounds(
    channel_model: ChannelModel, decoy_template, decoy_params, omega
) -> None:
    inputs = _build(decoy_template, decoy_params, omega)
    counts = channel_expectations(channel_model, inputs)
    tight = decoy_single_photon_bounds(counts, inputs, 1.0)
    wide = decoy_single_photon_bounds(counts, inputs, per_bound_eps(inputs))
    assert wide.n1z_l <= tight.n1z_l
    assert wide.n1x_l <= tight.n1x_l
    assert wide.m1x_u >= tight.m1x_u
    assert wide.n1z_u >= tight.n1z_u


def test_phase_error_bound(channel_model, decoy_template, decoy_params, omega) -> None:
    inputs = _build(decoy_template, decoy_params, omega)
    counts = channel_expectations(channel_model, inputs)
    eps = per_bound_eps(inputs)
    bounds = decoy_single_photon_bounds(counts, inputs, eps)
    phi = phase_error_upper(SamplingBoundKind.RELAXED_CHERNOFF, bounds, eps)
    serfling = phase_error_upper(SamplingBoundKind.SERFLING, bounds, eps)
    assert bounds.e1x < phi < 0.5
    assert serfling > bounds.e1x
    with pytest.raises(ConfigurationError):
        phase_error_upper(SamplingBoundKind.EKERT_COMBINED, bounds, eps)


def test_key_length_grows_with_block_size(
    channel_model, decoy_template, decoy_params, omega
) -> None:
    small = evaluate_decoy(_build(decoy_template, decoy_params, omega, N=1e9), channel_model)
    large = evaluate_decoy(_build(decoy_template, decoy_params, omega, N=1e11), channel_model)
    assert large.feasible
    assert large.l > small.l >= 0
    assert large.eps_sec == pytest.approx(7e-8, rel=1e-12)
    assert large.rate == large.l / 1e11


def test_failed_parameter_estimation_gives_no_key(
    channel_model, decoy_template, decoy_params, omega
) -> None:
    inputs = _build(decoy_template, decoy_params, omega, N=1e11)
    thresholds = pe_thresholds(inputs, channel_model)
    expected = channel_expectations(channel_model, inputs)
    m_mu, m_nu, m_omega = expected.m_x
    noisy = ObservedCounts(n_z=expected.n_z, n_x=expected.n_x, m_x=(3.0 * m_mu, 3.0 * m_nu, m_omega))
    result = key_length_decoy(inputs, noisy, thresholds, channel_model)
    assert result.l == 0
    assert not result.feasible
    assert key_length_decoy(inputs, expected, thresholds, channel_model).feasible


def test_theta_needs_value_or_model(channel_model, decoy_template, decoy_params, omega) -> None:
    inputs = _build(decoy_template, decoy_params, omega)
    thresholds = pe_thresholds(inputs, channel_model)
    counts = channel_expectations(channel_model, inputs)
    with pytest.raises(ConfigurationError):
        key_length_decoy(inputs, counts, thresholds)


def test_ekert_form_thresholds(channel_model, decoy_template, decoy_params, omega) -> None:
    template = replace(
        decoy_template,
        sampling_kind=SamplingBoundKind.EKERT_COMBINED,
        bernoulli_kind=BernoulliBoundKind.MULT_CHERNOFF,
        ekert_direction=EkertDirection.MIN_TIGHTEST,
    )
    inputs = _build(template, decoy_params, omega, N=1e11)
    thresholds = pe_thresholds(inputs, channel_model, bset_resolution=4)
    assert thresholds.is_ekert_form
    assert thresholds.phi1z_th > thresholds.e1x_th
    assert thresholds.u_range[0] <= thresholds.u_range[1]
    result = evaluate_decoy(inputs, channel_model, bset_resolution=4)
    assert result.eps_sec == pytest.approx(7e-8, rel=1e-12)
    assert result.feasible == (result.l > 0)


def test_decoy_inputs_validation() -> None:
    base = dict(omega=1e-4, p_mu=0.6, p_nu=0.3)
    with pytest.raises(ConfigurationError):
        DecoyInputs.from_block(1e9, 0.1, mu=0.1, nu=0.5, **base)
    with pytest.raises(ConfigurationError):
        DecoyInputs.from_block(1e9, 0.1, mu=0.5, nu=0.1, omega=1e-4, p_mu=0.6, p_nu=0.4)
    with pytest.raises(ConfigurationError):
        DecoyInputs.from_block(1e9, 0.1, mu=0.5, nu=0.1, theta_th=0.5, **base)
