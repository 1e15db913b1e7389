"""Finite key length of the entanglement-based BBM92 protocol."""

import logging
import math
from typing import Optional

from backend.bounds.bound_types import SamplingBoundKind
from backend.bounds.sampling import slope_check, threshold
from backend.common.errors import InfeasibleError, SlopeConditionError
from backend.data_model.protocol import BBM92Inputs, KeyResult
from backend.numerics.precision import PrecisionConfig
from backend.numerics.special import binary_entropy

logger = logging.getLogger(__name__)


def bbm92_eps_sec(inputs: BBM92Inputs) -> float:
    return 2.0 * math.sqrt(inputs.eps_pe) + inputs.eps_pa


def bbm92_q_threshold(
    inputs: BBM92Inputs, precision: Optional[PrecisionConfig] = None
) -> float:
    """PHER threshold for the sifted key; inf when the Ekert grid is infeasible."""
    kind = inputs.bound_kind
    if not slope_check(kind, inputs.N, inputs.n, inputs.eps_pe, inputs.p_th, precision=precision):
        raise SlopeConditionError(
            f"{kind.value} threshold is not nondecreasing at p_th={inputs.p_th} "
            f"(N={inputs.N}, n={inputs.n}); the PE test p_hat <= p_th is not sound",
            field="bound_kind",
        )
    try:
        return threshold(
            kind,
            inputs.N,
            inputs.n,
            inputs.eps_pe,
            inputs.p_th,
            ekert_direction=inputs.ekert_direction,
            precision=precision,
        )
    except InfeasibleError:
        if kind is not SamplingBoundKind.EKERT_COMBINED:
            raise
        logger.debug("ekert grid infeasible at N=%d, n=%d", inputs.N, inputs.n)
        return math.inf


def key_length_bbm92(
    inputs: BBM92Inputs, precision: Optional[PrecisionConfig] = None
) -> KeyResult:
    q_th = bbm92_q_threshold(inputs, precision)
    eps_sec = bbm92_eps_sec(inputs)
    sifted = inputs.N - inputs.n
    leak = inputs.lambda_ec_factor * sifted * binary_entropy(inputs.p_th)
    tag = math.log2(1.0 / (2.0 * inputs.eps_cor * inputs.eps_pa**2))
    raw = sifted * (1.0 - binary_entropy(min(q_th, 0.5))) - leak - tag
    if q_th >= 0.5:
        return KeyResult(
            l=0, rate=0.0, eps_sec=eps_sec, eps_cor=inputs.eps_cor,
            q_or_phi_threshold=q_th, feasible=False, raw_length=raw,
        )
    length = max(0, math.floor(raw))
    return KeyResult(
        l=length,
        rate=length / inputs.N,
        eps_sec=eps_sec,
        eps_cor=inputs.eps_cor,
        q_or_phi_threshold=q_th,
        feasible=length > 0,
        raw_length=raw,
    )
