"""Smallest block size yielding a nonzero key."""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Union

from backend.common.errors import ConfigurationError
from backend.data_model.protocol import BBM92Template, ChannelModel, DecoyTemplate
from backend.data_model.sweep import MinBlockReport, Protocol, SearchSpace
from backend.numerics.precision import PrecisionConfig
from backend.optimizer.search import (
    BBM92_MIN_BLOCK,
    DECOY_MIN_BLOCK,
    optimize_bbm92,
    optimize_decoy,
)

logger = logging.getLogger(__name__)

START_BLOCK = 500
BLOCK_CAP = 100_000_000
REL_RESOLUTION = 0.01
VERIFY_MARGIN = 0.05
_MAX_WIDENINGS = 8


def family_label(template: Union[BBM92Template, DecoyTemplate]) -> str:
    if isinstance(template, BBM92Template):
        return template.bound_kind.value
    return f"{template.sampling_kind.value}+{template.bernoulli_kind.value}"


def _feasibility_oracle(
    protocol: Protocol,
    template,
    model: Optional[ChannelModel],
    space: Optional[SearchSpace],
    precision: Optional[PrecisionConfig],
) -> Callable[[int], bool]:
    if protocol is Protocol.BBM92:
        if not isinstance(template, BBM92Template):
            raise ConfigurationError("bbm92 needs a BBM92Template", field="protocol")
        return lambda N: optimize_bbm92(N, template, precision)[1].l > 0
    if not isinstance(template, DecoyTemplate):
        raise ConfigurationError("decoy needs a DecoyTemplate", field="protocol")
    if model is None:
        raise ConfigurationError("decoy search needs a channel model", field="channel")
    return lambda N: optimize_decoy(N, model, template, space, precision)[1].l > 0


def _bisect(feasible: Callable[[int], bool], lo: int, hi: int) -> int:
    """Shrink (lo infeasible, hi feasible] to 1% relative width; returns hi."""
    while hi - lo > max(1, int(REL_RESOLUTION * hi)):
        mid = (lo + hi) // 2
        logger.debug("bisection bracket (%d, %d], probing %d", lo, hi, mid)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_block_size(
    protocol: Union[Protocol, str],
    template: Union[BBM92Template, DecoyTemplate],
    model: Optional[ChannelModel] = None,
    space: Optional[SearchSpace] = None,
    cap: int = BLOCK_CAP,
    precision: Optional[PrecisionConfig] = None,
) -> MinBlockReport:
    """Minimum block size with an optimized positive key length.

    The bracket doubles upwards from 500 (or halves downwards when 500 already
    works), then bisection assumes feasibility is monotone in N. Points 5% on
    either side of the result are re-evaluated; a feasible point below widens
    the bracket downwards, an infeasible point above marks the report unverified.
    """
    protocol = Protocol(protocol)
    floor_block = BBM92_MIN_BLOCK if protocol is Protocol.BBM92 else DECOY_MIN_BLOCK
    oracle = _feasibility_oracle(protocol, template, model, space, precision)
    cache: Dict[int, bool] = {}

    def feasible(N: int) -> bool:
        if N < floor_block:
            return False
        if N not in cache:
            cache[N] = oracle(N)
        return cache[N]

    report = MinBlockReport(
        protocol=protocol, family=family_label(template), n_min=None,
        feasible=False, verified=True,
    )
    start = max(START_BLOCK, floor_block)
    if feasible(start):
        hi, lo = start, start // 2
        while lo >= floor_block and feasible(lo):
            hi, lo = lo, lo // 2
        lo = max(lo, floor_block - 1)
    else:
        lo, hi = start, start * 2
        while hi < cap and not feasible(hi):
            lo, hi = hi, hi * 2
        if hi >= cap:
            hi = cap
            if not feasible(cap):
                logger.warning("%s %s: no positive key below N=%d", protocol.value, report.family, cap)
                report.evaluations = len(cache)
                report.notes.append(f"infeasible below {format_cap(cap)}")
                return report

    n_min = _bisect(feasible, lo, hi)
    for _ in range(_MAX_WIDENINGS):
        below = int(math.floor(n_min * (1.0 - VERIFY_MARGIN)))
        if not feasible(below):
            break
        logger.info("N=%d is feasible below N_min=%d; widening the bracket", below, n_min)
        report.notes.append(f"feasible at {below} below first estimate {n_min}")
        lo = max(below // 2, floor_block - 1)
        while lo >= floor_block and feasible(lo):
            below, lo = lo, max(lo // 2, floor_block - 1)
        n_min = _bisect(feasible, lo, below)

    above = int(math.ceil(n_min * (1.0 + VERIFY_MARGIN)))
    if not feasible(above):
        logger.warning(
            "%s %s: N=%d above N_min=%d is infeasible; feasibility is not monotone here",
            protocol.value, report.family, above, n_min,
        )
        report.verified = False
        report.notes.append(f"infeasible at {above} above N_min")

    report.n_min = n_min
    report.feasible = True
    report.evaluations = len(cache)
    logger.info("%s %s: N_min=%d after %d evaluations", protocol.value, report.family, n_min, report.evaluations)
    return report


def format_cap(cap: int) -> str:
    """Short form of a block size cap, 1e8 for powers of ten."""
    exponent = math.log10(cap) if cap > 0 else 0.0
    if exponent == int(exponent) and exponent >= 3:
        return f"1e{int(exponent)}"
    return str(cap)


def pairwise_reductions(reports: Sequence[dict]) -> List[dict]:
    """Percentage by which each family lowers N_min relative to every larger one."""
    feasible = [r for r in reports if r.get("feasible") and r.get("n_min")]
    rows = []
    for baseline in feasible:
        for other in feasible:
            if other["n_min"] < baseline["n_min"]:
                rows.append({
                    "family": other["family"],
                    "baseline": baseline["family"],
                    "reduction_pct": 100.0 * (1.0 - other["n_min"] / baseline["n_min"]),
                })
    return rows
