"""``key = value`` configuration files and the pipeline's effective settings.

Precedence is command-line flag, then config file, then the defaults below.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import ContractError, ParseError
from .flow import FlowParams
from .grouping import MeanShiftParams

# moving-pixel fraction must fall strictly between these
GATE_LOW = 0.10
GATE_HIGH = 0.70
PART_COUNT = 5
SUPPORTED_PART_COUNTS = (1, 3, 5, 7)


def parse_kv_file(path) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            if key in values:
                raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return values


def _coerce(type_name: str, raw, where: str):
    if not isinstance(raw, str):
        return raw
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ParseError(f"{where}: cannot read {raw!r} as {type_name}") from None
    return raw


def coerce_fields(cls, values: dict, where: str = "config") -> dict:
    """Convert string values to the annotated field types of dataclass ``cls``."""
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        if key not in known:
            raise ParseError(f"{where}: unknown key {key!r}")
        out[key] = _coerce(str(known[key].type), raw, f"{where}: {key}")
    return out


@dataclass(frozen=True)
class PipelineConfig:
    flow: FlowParams = field(default_factory=FlowParams)
    shift: MeanShiftParams = field(default_factory=MeanShiftParams)
    eps: float = 0.5
    gate_low: float = GATE_LOW
    gate_high: float = GATE_HIGH
    k: int = PART_COUNT
    min_overlap: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gate_low < self.gate_high <= 1.0:
            raise ContractError("gate thresholds must satisfy 0 <= low < high <= 1")
        if self.k not in SUPPORTED_PART_COUNTS:
            raise ContractError(f"part count must be one of {SUPPORTED_PART_COUNTS}, got {self.k}")
        if self.eps < 0:
            raise ContractError("eps must be non-negative")
        if not 0.0 < self.min_overlap <= 1.0:
            raise ContractError("min_overlap must lie in (0, 1]")

    def flat(self) -> dict:
        """Every setting under its flag/config-file name."""
        out = {}
        out.update(self.flow.as_dict())
        out.update(self.shift.as_dict())
        for name in ("eps", "gate_low", "gate_high", "k", "min_overlap"):
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_flat(cls, values: dict, where: str = "config") -> "PipelineConfig":
        """Build from a flat mapping; missing keys take their defaults."""
        flow_keys = {f.name for f in fields(FlowParams)}
        shift_keys = {f.name for f in fields(MeanShiftParams)}
        own_keys = {"eps", "gate_low", "gate_high", "k", "min_overlap"}
        unknown = set(values) - flow_keys - shift_keys - own_keys
        if unknown:
            raise ParseError(f"{where}: unknown key(s) {sorted(unknown)}")
        flow = FlowParams(**coerce_fields(FlowParams, {k: v for k, v in values.items() if k in flow_keys}, where))
        shift = MeanShiftParams(
            **coerce_fields(MeanShiftParams, {k: v for k, v in values.items() if k in shift_keys}, where)
        )
        own = {k: v for k, v in values.items() if k in own_keys}
        types = {"eps": "float", "gate_low": "float", "gate_high": "float", "k": "int", "min_overlap": "float"}
        own = {k: _coerce(types[k], v, f"{where}: {k}") for k, v in own.items()}
        return cls(flow=flow, shift=shift, **own)

    def dump(self) -> str:
        return "".join(f"{key} = {value}\n" for key, value in sorted(self.flat().items()))
