"""
Configuration Management for dagbft

Two kinds of settings live here:

- SimConfig: everything a simulation run needs. Stored as JSON files
  (see fixtures/default_sim.json) and overridden by CLI flags.
- ValidatorSettings: per-validator knobs (timeouts, queue sizes). Read from
  DAGBFT_* environment variables through pydantic-settings, so a deployment
  can tweak them without touching files.

All models are Pydantic, so a bad value fails loudly at load time with the
field name in the message instead of somewhere deep inside a run.
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional
import json
import re

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from dagbft.errors import ConfigError

SIM_LEADER_TIMEOUT_MS = 1000
PRODUCTION_LEADER_TIMEOUT_MS = 250

FaultKind = Literal["crash", "mute", "equivocate", "restart"]
EquivocationStrategy = Literal["split-views", "double-sign"]
ScheduleKind = Literal["round-robin", "fixed"]


class ValidatorSettings(BaseSettings):
    """
    Knobs for a single validator.

    Every field can be set from the environment, e.g.
    DAGBFT_LEADER_TIMEOUT_MS=250.
    """

    model_config = SettingsConfigDict(env_prefix="DAGBFT_", extra="ignore")

    leader_timeout_ms: int = Field(
        SIM_LEADER_TIMEOUT_MS,
        ge=1,
        description="How long to wait for a missing leader or its votes before proposing anyway",
    )
    drift_tolerance_ms: int = Field(
        500, ge=0, description="Future timestamps up to this far ahead are accepted"
    )
    max_suspend_ms: int = Field(
        5000, ge=0, description="Future timestamps beyond drift but within this are suspended"
    )
    queue_capacity: int = Field(
        10_000, ge=1, description="Pending client transactions kept before submissions bounce"
    )
    max_block_transactions: int = Field(
        500, ge=0, description="Transactions packed into one block at most"
    )

    @classmethod
    def simulator(cls, **overrides: Any) -> "ValidatorSettings":
        """Preset used by the simulator (1 s leader timeout)."""
        return cls(leader_timeout_ms=SIM_LEADER_TIMEOUT_MS, **overrides)

    @classmethod
    def production(cls, **overrides: Any) -> "ValidatorSettings":
        """Preset with the tighter 250 ms leader timeout."""
        return cls(leader_timeout_ms=PRODUCTION_LEADER_TIMEOUT_MS, **overrides)


class PairLatency(BaseModel):
    """Latency bounds for one ordered (sender, receiver) pair."""

    src: int = Field(..., ge=0, description="Sending authority")
    dst: int = Field(..., ge=0, description="Receiving authority")
    min_ms: int = Field(..., ge=0, description="Smallest one-way delay")
    max_ms: int = Field(..., ge=0, description="Largest one-way delay")


class LatencyModel(BaseModel):
    """
    One-way message delay.

    Samples are uniform integers in [min_ms, max_ms]. Setting both bounds
    equal gives constant latency (lockstep runs).
    """

    min_ms: int = Field(50, ge=0, description="Default lower bound")
    max_ms: int = Field(50, ge=0, description="Default upper bound")
    pairs: List[PairLatency] = Field(
        default_factory=list, description="Per ordered pair overrides of the default bounds"
    )

    @model_validator(mode="after")
    def _bounds_ordered(self) -> "LatencyModel":
        if self.max_ms < self.min_ms:
            raise ValueError("max_ms must be >= min_ms")
        for pair in self.pairs:
            if pair.max_ms < pair.min_ms:
                raise ValueError(f"pair {pair.src}->{pair.dst}: max_ms must be >= min_ms")
        return self

    @classmethod
    def constant(cls, delay_ms: int) -> "LatencyModel":
        return cls(min_ms=delay_ms, max_ms=delay_ms)

    def bounds(self, src: int, dst: int) -> tuple[int, int]:
        """Return (min, max) for the ordered pair."""
        for pair in self.pairs:
            if pair.src == src and pair.dst == dst:
                return pair.min_ms, pair.max_ms
        return self.min_ms, self.max_ms


class FaultSpec(BaseModel):
    """
    One injected fault.

    crash: stop at at_ms (messages already sent still arrive).
    mute: keep receiving but never send again after at_ms.
    equivocate: Byzantine proposer following `strategy` for the whole run.
    restart: crash at at_ms and immediately recover from the write-ahead log.
    """

    authority: int = Field(..., ge=0, description="Which validator misbehaves")
    kind: FaultKind = Field(..., description="crash | mute | equivocate | restart")
    at_ms: int = Field(0, ge=0, description="Virtual time the fault kicks in")
    strategy: EquivocationStrategy = Field(
        "split-views", description="Equivocation strategy (only for kind=equivocate)"
    )

    @property
    def counts_against_f(self) -> bool:
        """Restarts are benign; everything else is a faulty authority."""
        return self.kind != "restart"

    def label(self) -> str:
        if self.kind == "equivocate":
            return f"{self.authority}:equivocate({self.strategy})"
        return f"{self.authority}:{self.kind}@{self.at_ms}"


class WorkloadConfig(BaseModel):
    """Client transactions thrown at the validators."""

    rate_per_s: float = Field(
        0.0, ge=0.0, description="Transactions per virtual second across all clients (0 = none)"
    )
    until_ms: Optional[int] = Field(
        None, ge=0, description="Stop submitting at this time (default: run duration)"
    )
    conflict_rate: float = Field(
        0.0,
        ge=0.0,
        le=1.0,
        description="Share of submissions that are equivocating pairs sent to disjoint halves",
    )
    mixed_fraction: float = Field(
        0.0, ge=0.0, le=1.0, description="Share of transactions with owned and shared inputs"
    )
    shared_fraction: float = Field(
        0.0, ge=0.0, le=1.0, description="Share of transactions with only shared inputs"
    )
    inputs_per_tx: int = Field(1, ge=1, description="Owned objects consumed per transaction")
    payload_bytes: int = Field(16, ge=0, description="Opaque payload size")
    resubmit_equivocated: bool = Field(
        True, description="Resubmit one side of an unresolved conflicting pair after epoch close"
    )


class SimConfig(BaseModel):
    """
    Main configuration for one simulation run.

    This is the whole structure of a sim config JSON file.
    """

    seed: int = Field(0, ge=0, lt=2**64, description="Master seed; every random stream derives from it")
    n: int = Field(4, ge=1, description="Committee size, must be 3f+1")
    latency: LatencyModel = Field(default_factory=LatencyModel, description="Message delays")
    gst_ms: int = Field(0, ge=0, description="Global stabilization time")
    delta_ms: int = Field(
        1000, ge=1, description="Post-GST delay bound; pre-GST delays stay below gst+delta"
    )
    duration_ms: int = Field(600_000, ge=1, description="Virtual time horizon")
    max_rounds: int = Field(50, ge=1, description="Validators stop proposing after this round")
    leader_timeout_ms: int = Field(
        SIM_LEADER_TIMEOUT_MS, ge=1, description="Timeout for both round-gate waits"
    )
    drift_tolerance_ms: int = Field(500, ge=0, description="Accepted future timestamp slack")
    max_suspend_ms: int = Field(5000, ge=0, description="Future timestamp slack that suspends")
    max_clock_skew_ms: int = Field(
        0, ge=0, description="Each validator's clock is offset by a seeded value in [0, this]"
    )
    queue_capacity: int = Field(10_000, ge=1, description="Per-validator pending queue size")
    max_block_transactions: int = Field(500, ge=0, description="Transactions per block cap")
    num_of_proposers: int = Field(2, ge=1, description="Proposer slots per round")
    wave_length: int = Field(3, ge=3, description="Rounds per wave")
    schedule: ScheduleKind = Field("round-robin", description="Leader schedule")
    commits_per_epoch: Optional[int] = Field(
        None, ge=1, description="Arm the epoch-change bit after this many commits (None = one epoch)"
    )
    faults: List[FaultSpec] = Field(default_factory=list, description="Injected faults")
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig, description="Client load")
    trace_capacity: int = Field(256, ge=1, description="Events kept for violation excerpts")
    allow_beyond_f: bool = Field(
        False, description="Permit more than f faulty authorities (safety checks are skipped)"
    )

    @field_validator("n")
    @classmethod
    def _committee_shape(cls, value: int) -> int:
        if (value - 1) % 3 != 0:
            raise ValueError(f"n={value} is not of the form 3f+1")
        return value

    @model_validator(mode="after")
    def _cross_checks(self) -> "SimConfig":
        if self.num_of_proposers > self.n:
            raise ValueError(f"num_of_proposers={self.num_of_proposers} exceeds n={self.n}")
        for fault in self.faults:
            if fault.authority >= self.n:
                raise ValueError(f"fault on authority {fault.authority} but n={self.n}")
        for pair in self.latency.pairs:
            if pair.src >= self.n or pair.dst >= self.n:
                raise ValueError(f"latency pair {pair.src}->{pair.dst} outside committee")
        if len(self.faulty_authorities()) > self.f and not self.allow_beyond_f:
            raise ValueError(
                f"{len(self.faulty_authorities())} faulty authorities exceed f={self.f} "
                "(set allow_beyond_f for adversarial runs)"
            )
        return self

    @property
    def f(self) -> int:
        return (self.n - 1) // 3

    def faulty_authorities(self) -> List[int]:
        """Authorities that count against f (restarts excluded)."""
        return sorted({fault.authority for fault in self.faults if fault.counts_against_f})

    def validator_settings(self) -> ValidatorSettings:
        """The per-validator slice of this config."""
        return ValidatorSettings(
            leader_timeout_ms=self.leader_timeout_ms,
            drift_tolerance_ms=self.drift_tolerance_ms,
            max_suspend_ms=self.max_suspend_ms,
            queue_capacity=self.queue_capacity,
            max_block_transactions=self.max_block_transactions,
        )


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(loc) for loc in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def default_sim_config() -> SimConfig:
    """Sensible defaults: n=4, 50 rounds, 50 ms links, two proposers."""
    return SimConfig()


def load_sim_config(path: Path) -> SimConfig:
    """
    Load a simulation config from a JSON file.

    Args:
        path: JSON file to read

    Returns:
        Validated SimConfig

    Raises:
        ConfigError: file missing, not JSON, or values out of range
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc

    try:
        return SimConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_validation_message(exc)}") from exc


def save_sim_config(config: SimConfig, path: Path) -> None:
    """
    Save a simulation config as pretty JSON.

    Args:
        config: SimConfig to write
        path: Destination file (parent directories are created)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.model_dump(), indent=2) + "\n", encoding="utf-8")


def apply_overrides(config: SimConfig, **changes: Any) -> SimConfig:
    """
    Return a copy of config with the given fields replaced.

    None values are ignored, so CLI options that were not passed leave the
    file's value alone. The result is validated again.

    Example:
        apply_overrides(cfg, seed=7, gst_ms=None)  # only seed changes
    """
    data = config.model_dump()
    for key, value in changes.items():
        if value is None:
            continue
        if key not in SimConfig.model_fields:
            raise ConfigError(f"unknown config field: {key}")
        if isinstance(value, BaseModel):
            value = value.model_dump()
        elif isinstance(value, list):
            value = [v.model_dump() if isinstance(v, BaseModel) else v for v in value]
        data[key] = value
    try:
        return SimConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from exc


_FAULT_RE = re.compile(
    r"^(?P<authority>\d+):(?P<kind>crash|mute|restart|equivocate)"
    r"(?:@(?P<at>\d+))?(?:\((?P<strategy>split-views|double-sign)\))?$"
)


def parse_faults(text: str) -> List[FaultSpec]:
    """
    Parse the compact --faults syntax.

    Comma separated items like "2:crash@0", "3:mute@1500",
    "1:equivocate(split-views)" or "0:restart@4000".

    Raises:
        ConfigError: an item does not match the syntax
    """
    faults = []
    for raw in text.split(","):
        item = raw.strip()
        if not item:
            continue
        match = _FAULT_RE.match(item)
        if match is None:
            raise ConfigError(f"cannot parse fault '{item}'")
        spec: Dict[str, Any] = {
            "authority": int(match["authority"]),
            "kind": match["kind"],
            "at_ms": int(match["at"] or 0),
        }
        if match["strategy"]:
            spec["strategy"] = match["strategy"]
        faults.append(FaultSpec(**spec))
    return faults


if __name__ == "__main__":
    cfg = default_sim_config()
    print(f"n={cfg.n} f={cfg.f} proposers={cfg.num_of_proposers}")
    cfg = apply_overrides(cfg, n=7, faults=parse_faults("6:crash@0"))
    print(f"n={cfg.n} faulty={cfg.faulty_authorities()}")
