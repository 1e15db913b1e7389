"""Run configuration: JSON loading, validation and the named family presets."""

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from backend.bounds.bound_types import (
    DEFAULT_EKERT_DIRECTION,
    BernoulliBoundKind,
    EkertDirection,
    SamplingBoundKind,
)
from backend.common.errors import ConfigurationError
from backend.data_model.protocol import (
    BBM92Template,
    ChannelModel,
    DecoyTemplate,
)
from backend.data_model.sweep import SearchSpace
from backend.numerics.precision import PrecisionConfig
from backend.optimizer.search import BBM92_MIN_BLOCK, DECOY_MIN_BLOCK

logger = logging.getLogger(__name__)

THRESHOLD = "threshold"
PROTOCOLS = ("bbm92", "decoy", THRESHOLD)

BBM92_PRESETS = (
    "serfling",
    "ekert",
    "relaxed_chernoff",
    "hush_scovel",
    "greene_wellner",
    "cp_hg",
)
DECOY_PRESETS = (
    "ekert+hoeffding",
    "ekert+mult_chernoff",
    "relaxed_chernoff+relaxed_chernoff",
    "hush_scovel+relaxed_chernoff",
    "greene_wellner+relaxed_chernoff",
    "cp_hg+cp_binomial",
)
THRESHOLD_PRESETS = ("cp_hg", "relaxed_chernoff", "ekert", "serfling")

_KNOWN_KEYS = {
    "protocol", "families", "N", "sweep", "threshold", "p_th", "lambda_ec_factor",
    "eps_pe", "eps_cor", "eps_pa", "delta", "theta_th", "channel", "search",
    "ekert_direction", "seed", "output", "precision", "cap",
}


def number(value: Any, name: str) -> float:
    """A JSON number or a numeric string such as "4e-16"."""
    if isinstance(value, bool) or value is None:
        raise ConfigurationError(f"expected a number, got {value!r}", field=name)
    if isinstance(value, (int, float)):
        result = float(value)
    elif isinstance(value, str):
        try:
            result = float(value.strip())
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse {value!r} as a number", field=name) from exc
    else:
        raise ConfigurationError(f"expected a number, got {type(value).__name__}", field=name)
    if math.isnan(result):
        raise ConfigurationError("NaN is not allowed", field=name)
    return result


def integer(value: Any, name: str, minimum: int = 1) -> int:
    result = number(value, name)
    if not math.isfinite(result) or result != math.floor(result):
        raise ConfigurationError(f"expected an integer, got {value!r}", field=name)
    if result < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {int(result)}", field=name)
    return int(result)


def parse_decoy_family(label: str) -> Tuple[SamplingBoundKind, BernoulliBoundKind]:
    """'sampling+bernoulli' label into its two bound kinds."""
    sampling, sep, bernoulli = label.partition("+")
    if not sep:
        raise ConfigurationError(
            f"decoy families are written sampling+bernoulli, got {label!r}", field="families"
        )
    try:
        return SamplingBoundKind(sampling), BernoulliBoundKind(bernoulli)
    except ValueError as exc:
        raise ConfigurationError(str(exc), field="families") from exc


def _sampling_kind(label: str) -> SamplingBoundKind:
    try:
        return SamplingBoundKind(label)
    except ValueError as exc:
        raise ConfigurationError(str(exc), field="families") from exc


@dataclass(frozen=True)
class ThresholdSweep:
    """Fixed (N, n, eps) and the p_th values of a threshold comparison."""

    N: int = 100_000
    n: int = 10_000
    eps: float = 1e-9
    p_th: Tuple[float, ...] = tuple(round(0.005 * k, 12) for k in range(1, 9))


@dataclass(frozen=True)
class OutputPaths:
    csv: Optional[str] = None
    metadata: Optional[str] = None
    report: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    """A validated run: protocol, families, budgets, channel, sweep and outputs.

    source keeps the JSON document as loaded; its digest identifies the run.
    """

    protocol: str
    families: Tuple[str, ...]
    block_sizes: Tuple[float, ...] = ()
    bbm92: BBM92Template = field(default_factory=BBM92Template)
    decoy: DecoyTemplate = field(default_factory=DecoyTemplate)
    channel: ChannelModel = field(default_factory=ChannelModel)
    search: SearchSpace = field(default_factory=SearchSpace)
    threshold: ThresholdSweep = field(default_factory=ThresholdSweep)
    seed: Optional[int] = None
    output: OutputPaths = field(default_factory=OutputPaths)
    precision: Optional[PrecisionConfig] = None
    cap: int = 100_000_000
    source: Dict[str, Any] = field(default_factory=dict)

    def bbm92_template(self, family: str) -> BBM92Template:
        return replace(self.bbm92, bound_kind=_sampling_kind(family))

    def decoy_template(self, family: str) -> DecoyTemplate:
        sampling, bernoulli = parse_decoy_family(family)
        return replace(self.decoy, sampling_kind=sampling, bernoulli_kind=bernoulli)


def _block_sizes(raw: Dict[str, Any], protocol: str) -> Tuple[float, ...]:
    sweep = raw.get("sweep")
    if sweep is None:
        if "N" not in raw:
            return ()
        values = [number(raw["N"], "N")]
    elif isinstance(sweep, dict) and "N" in sweep:
        if not isinstance(sweep["N"], list) or not sweep["N"]:
            raise ConfigurationError("expected a non-empty list", field="sweep.N")
        values = [number(v, "sweep.N") for v in sweep["N"]]
    elif isinstance(sweep, dict) and "log_range" in sweep:
        span = sweep["log_range"]
        if not isinstance(span, dict):
            raise ConfigurationError("expected an object", field="sweep.log_range")
        start = number(span.get("start"), "sweep.log_range.start")
        stop = number(span.get("stop"), "sweep.log_range.stop")
        points = integer(span.get("points"), "sweep.log_range.points")
        if not 0.0 < start <= stop:
            raise ConfigurationError(
                f"need 0 < start <= stop, got ({start:g}, {stop:g})", field="sweep.log_range"
            )
        values = [float(v) for v in np.geomspace(start, stop, points)]
    else:
        raise ConfigurationError("expected {'N': [...]} or {'log_range': {...}}", field="sweep")

    if protocol == "bbm92":
        values = [float(round(v)) for v in values]
    for value in values:
        if not (math.isfinite(value) and value > 0):
            raise ConfigurationError(f"block sizes must be positive, got {value:g}", field="sweep")
    return tuple(values)


def _threshold_sweep(raw: Any) -> ThresholdSweep:
    if raw is None:
        return ThresholdSweep()
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field="threshold")
    defaults = ThresholdSweep()
    N = integer(raw.get("N", defaults.N), "threshold.N")
    n = integer(raw.get("n", defaults.n), "threshold.n")
    if n >= N:
        raise ConfigurationError(f"need n < N, got n={n}, N={N}", field="threshold.n")
    eps = number(raw.get("eps", defaults.eps), "threshold.eps")
    if not 0.0 < eps < 1.0:
        raise ConfigurationError(f"must lie in (0, 1), got {eps}", field="threshold.eps")

    grid = raw.get("p_th", list(defaults.p_th))
    if isinstance(grid, dict):
        start = number(grid.get("start"), "threshold.p_th.start")
        stop = number(grid.get("stop"), "threshold.p_th.stop")
        step = number(grid.get("step"), "threshold.p_th.step")
        if step <= 0.0 or stop < start:
            raise ConfigurationError("need step > 0 and stop >= start", field="threshold.p_th")
        p_values = [round(v, 12) for v in np.arange(start, stop + step / 2.0, step)]
    elif isinstance(grid, list) and grid:
        p_values = [number(v, "threshold.p_th") for v in grid]
    else:
        raise ConfigurationError("expected a list or {start, stop, step}", field="threshold.p_th")
    for p in p_values:
        if not 0.0 <= p < 1.0:
            raise ConfigurationError(f"must lie in [0, 1), got {p}", field="threshold.p_th")
    return ThresholdSweep(N=N, n=n, eps=eps, p_th=tuple(p_values))


def _channel(raw: Any) -> ChannelModel:
    if raw is None:
        return ChannelModel()
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field="channel")
    if raw.get("loss_db") is not None and raw.get("eta") is not None:
        raise ConfigurationError("loss_db and eta are mutually exclusive", field="channel")
    kwargs = {}
    for name in ("loss_db", "p_d", "e_mis", "eta"):
        if raw.get(name) is not None:
            kwargs[name] = number(raw[name], f"channel.{name}")
    unknown = set(raw) - {"loss_db", "p_d", "e_mis", "eta"}
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", field="channel")
    return ChannelModel(**kwargs)


def _search(raw: Any) -> SearchSpace:
    if raw is None:
        return SearchSpace()
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field="search")
    kwargs: Dict[str, Any] = {}
    for entry in fields(SearchSpace):
        if entry.name not in raw:
            continue
        value = raw[entry.name]
        label = f"search.{entry.name}"
        if entry.name.endswith("_range"):
            if not isinstance(value, list) or len(value) != 2:
                raise ConfigurationError("expected [lo, hi]", field=label)
            kwargs[entry.name] = (number(value[0], label), number(value[1], label))
        elif entry.type is int:
            kwargs[entry.name] = integer(value, label)
        else:
            kwargs[entry.name] = number(value, label)
    unknown = set(raw) - {entry.name for entry in fields(SearchSpace)}
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", field="search")
    return SearchSpace(**kwargs)


def _precision(raw: Any) -> Optional[PrecisionConfig]:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field="precision")
    kwargs: Dict[str, Any] = {}
    for name in ("rel_tol", "tail_safety"):
        if name in raw:
            kwargs[name] = number(raw[name], f"precision.{name}")
    for name in ("max_iter", "lgamma_cap"):
        if name in raw:
            kwargs[name] = integer(raw[name], f"precision.{name}")
    return PrecisionConfig(**kwargs)


def _output(raw: Any) -> OutputPaths:
    if raw is None:
        return OutputPaths()
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field="output")
    for name, value in raw.items():
        if name not in ("csv", "metadata", "report"):
            raise ConfigurationError(f"unknown key {name!r}", field="output")
        if value is not None and not isinstance(value, str):
            raise ConfigurationError("expected a path string", field=f"output.{name}")
    metadata = raw.get("metadata")
    if metadata is None and raw.get("csv"):
        metadata = str(Path(raw["csv"]).with_suffix(".meta.json"))
    return OutputPaths(csv=raw.get("csv"), metadata=metadata, report=raw.get("report"))


def _families(raw: Any, protocol: str) -> Tuple[str, ...]:
    defaults = {"bbm92": BBM92_PRESETS, "decoy": DECOY_PRESETS, THRESHOLD: THRESHOLD_PRESETS}
    if raw is None:
        return defaults[protocol]
    if not isinstance(raw, list) or not raw:
        raise ConfigurationError("expected a non-empty list", field="families")
    for label in raw:
        if not isinstance(label, str):
            raise ConfigurationError(f"expected a string, got {label!r}", field="families")
        if protocol == "decoy":
            parse_decoy_family(label)
        else:
            _sampling_kind(label)
    return tuple(raw)


def _ekert_direction(raw: Any) -> EkertDirection:
    if raw is None:
        return DEFAULT_EKERT_DIRECTION
    try:
        return EkertDirection(raw)
    except ValueError as exc:
        raise ConfigurationError(str(exc), field="ekert_direction") from exc


def _budgets(raw: Dict[str, Any], direction: EkertDirection) -> Tuple[BBM92Template, DecoyTemplate]:
    shared: Dict[str, Any] = {"ekert_direction": direction}
    for name in ("lambda_ec_factor", "eps_pe", "eps_cor", "eps_pa"):
        if name in raw:
            shared[name] = number(raw[name], name)
    bbm92 = BBM92Template(**shared)
    if "p_th" in raw:
        bbm92 = replace(bbm92, p_th=number(raw["p_th"], "p_th"))
    decoy = DecoyTemplate(**shared)
    if "delta" in raw:
        decoy = replace(decoy, delta=number(raw["delta"], "delta"))
    if raw.get("theta_th") is not None:
        decoy = replace(decoy, theta_th=number(raw["theta_th"], "theta_th"))
    # BBM92Inputs and DecoyInputs carry the range checks
    bbm92.build(1000, 100)
    decoy.build(1e6, 0.5, 0.1, 1e-4, 0.3, 0.3, 0.1)
    return bbm92, decoy


def config_from_dict(raw: Dict[str, Any]) -> RunConfig:
    """Validate a JSON document into a RunConfig; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigurationError("the configuration must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}", field="config")
    protocol = raw.get("protocol")
    if protocol not in PROTOCOLS:
        raise ConfigurationError(f"expected one of {PROTOCOLS}, got {protocol!r}", field="protocol")

    bbm92, decoy = _budgets(raw, _ekert_direction(raw.get("ekert_direction")))
    block_sizes = _block_sizes(raw, protocol)
    search = _search(raw.get("search"))
    floor_block = {"bbm92": BBM92_MIN_BLOCK, "decoy": DECOY_MIN_BLOCK}.get(protocol, 0)
    if any(N < floor_block for N in block_sizes):
        raise ConfigurationError(f"{protocol} block sizes must be >= {floor_block}", field="sweep")

    seed = raw.get("seed")
    if seed is not None:
        seed = integer(seed, "seed", minimum=0)
    cap = integer(raw.get("cap", 100_000_000), "cap")

    config = RunConfig(
        protocol=protocol,
        families=_families(raw.get("families"), protocol),
        block_sizes=block_sizes,
        bbm92=bbm92,
        decoy=decoy,
        channel=_channel(raw.get("channel")),
        search=search,
        threshold=_threshold_sweep(raw.get("threshold")),
        seed=seed,
        output=_output(raw.get("output")),
        precision=_precision(raw.get("precision")),
        cap=cap,
        source=raw,
    )
    logger.debug("loaded %s config with %d families", protocol, len(config.families))
    return config


def load_config(path: str) -> RunConfig:
    """Read and validate a RunConfig JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}", field="config") from exc
    return config_from_dict(raw)
