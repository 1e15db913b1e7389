"""Shared fixtures: the BBM92 and decoy settings used across the suite."""

import pytest

from backend.bounds.bound_types import BernoulliBoundKind, SamplingBoundKind
from backend.data_model.protocol import BBM92Template, ChannelModel, DecoyTemplate
from backend.data_model.sweep import DecoyParams, SearchSpace
from backend.numerics.precision import set_precision


@pytest.fixture(autouse=True)
def _reset_precision():
    set_precision(None)
    yield
    set_precision(None)


@pytest.fixture
def bbm92_template() -> BBM92Template:
    """p_th = 4.55%, lambda_EC factor 1.19, eps_cor = eps_PA = 1e-8, eps_PE = 4e-16."""
    return BBM92Template(
        p_th=0.0455,
        lambda_ec_factor=1.19,
        eps_pe=4e-16,
        eps_cor=1e-8,
        eps_pa=1e-8,
        bound_kind=SamplingBoundKind.RELAXED_CHERNOFF,
    )


@pytest.fixture
def channel_model() -> ChannelModel:
    """30 dB loss, p_d = 6e-7, e_mis = 0.5%."""
    return ChannelModel(loss_db=30.0, p_d=6e-7, e_mis=5e-3)


@pytest.fixture
def decoy_template() -> DecoyTemplate:
    return DecoyTemplate(
        lambda_ec_factor=1.19,
        eps_pe=4e-16,
        eps_cor=1e-8,
        eps_pa=1e-8,
        delta=1e-8,
        sampling_kind=SamplingBoundKind.RELAXED_CHERNOFF,
        bernoulli_kind=BernoulliBoundKind.RELAXED_CHERNOFF,
    )


@pytest.fixture
def decoy_params() -> DecoyParams:
    """A reasonable operating point at N = 1e9 for 30 dB."""
    return DecoyParams(mu=0.5, nu=0.1, p_mu=0.6, p_nu=0.3, q_x=0.1)


@pytest.fixture
def omega() -> float:
    return 1e-4


@pytest.fixture
def small_search() -> SearchSpace:
    """Coarse search box that keeps optimizer tests quick."""
    return SearchSpace(grid_resolution=2, top_k=1, max_evaluations=40, bset_resolution=8)
