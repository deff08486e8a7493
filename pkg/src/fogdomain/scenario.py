"""Declarative scenario files (YAML) and their validated in-memory form."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints

import yaml

KINDS = ("deploy", "migrate", "availability_soak", "custom")


class ConfigError(ValueError):
    pass


@dataclass
class LedgerParams:
    block_interval_ms: float = 1000.0
    notification_delay_ms: float = 5.0
    notification_jitter_ms: float = 0.0


@dataclass
class ContractParams:
    reply_threshold: Optional[int] = None
    vote_threshold: Optional[int] = None
    owner_may_solve: bool = True


@dataclass
class LinkParams:
    data_ms: float = 2.0
    sdn_control_ms: float = 3.0
    control_link_ms: float = 2.0
    jitter_ms: float = 0.0


@dataclass
class SdnParams:
    idle_timeout_ms: Optional[float] = None
    migration_cutover: str = "overlap"


@dataclass
class HealthParams:
    probe_interval_ms: float = 500.0
    probe_timeout_ms: float = 100.0
    consecutive_passes_required: int = 1


@dataclass
class ClientParams:
    src_ip: str = "192.168.0.50"
    syn_timeout_ms: float = 300.0
    max_retries: int = 3
    response_timeout_ms: float = 5000.0
    stream_rto_ms: float = 200.0
    stream_preconnect_ms: float = 1000.0
    drift_ppm: float = 0.0


@dataclass
class AgentParams:
    vote_strategy: str = "free_capacity"  # free_capacity | random
    max_running_containers: Optional[int] = None
    max_cpu_utilization: Optional[float] = None
    monitor_interval_ms: float = 1000.0
    drain_ms: float = 0.0


@dataclass
class ServiceParams:
    vip: str = "170.100.8.33"
    port: int = 80
    proto: str = "TCP"
    replicas: int = 1
    owner: int = 1


@dataclass
class ProfileOverride:
    startup_time_ms: Optional[float] = None
    processing_ms: Optional[float] = None
    connection_mode: Optional[str] = None
    cpu_demand: Optional[float] = None
    mem_demand: Optional[float] = None
    port: Optional[int] = None


@dataclass
class ScenarioConfig:
    kind: str = "custom"
    name: str = ""
    R: float = 3.0
    H: bool = True
    duration_s: float = 60.0
    profile: str = "nginx"
    cluster_size: int = 3
    seed: int = 0
    deploy_at_s: float = 0.5
    workload_start_s: float = 0.0
    drain_s: float = 30.0
    migration_period_s: Optional[float] = None
    migration_times_s: list[float] = field(default_factory=list)
    service: ServiceParams = field(default_factory=ServiceParams)
    ledger: LedgerParams = field(default_factory=LedgerParams)
    contracts: ContractParams = field(default_factory=ContractParams)
    links: LinkParams = field(default_factory=LinkParams)
    sdn: SdnParams = field(default_factory=SdnParams)
    health: HealthParams = field(default_factory=HealthParams)
    client: ClientParams = field(default_factory=ClientParams)
    agents: AgentParams = field(default_factory=AgentParams)
    profiles: dict[str, ProfileOverride] = field(default_factory=dict)

    def validate(self) -> "ScenarioConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.R <= 0:
            raise ConfigError("R must be > 0")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        defaults = self.contracts.reply_threshold is None or self.contracts.vote_threshold is None
        if self.cluster_size < 3 and defaults:
            raise ConfigError("cluster_size must be >= 3 with default quorum thresholds")
        if self.cluster_size < 1:
            raise ConfigError("cluster_size must be >= 1")
        if self.migration_period_s is not None and self.migration_period_s <= 0:
            raise ConfigError("migration_period_s must be > 0")
        if self.sdn.migration_cutover not in ("overlap", "atomic"):
            raise ConfigError("sdn.migration_cutover must be overlap or atomic")
        if self.agents.vote_strategy not in ("free_capacity", "random"):
            raise ConfigError("agents.vote_strategy must be free_capacity or random")
        if not 1 <= self.service.owner <= self.cluster_size:
            raise ConfigError("service.owner must index a cluster node")
        if self.service.replicas < 0:
            raise ConfigError("service.replicas must be >= 0")
        if self.kind == "availability_soak" and self.migration_period_s is None:
            raise ConfigError("availability_soak needs migration_period_s")
        if self.kind == "migrate" and self.migration_period_s is None and not self.migration_times_s:
            raise ConfigError("migrate needs migration_period_s or migration_times_s")
        return self

    @property
    def request_count(self) -> int:
        return int(round(self.duration_s / self.R))

    def migration_offsets_s(self) -> list[float]:
        """Trigger times relative to the workload start."""
        times = list(self.migration_times_s)
        if self.migration_period_s is not None:
            k = 1
            while k * self.migration_period_s <= self.duration_s + 1e-9:
                times.append(k * self.migration_period_s)
                k += 1
        return sorted(times)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(hints[key], value, f"{where}.{key}" if where else key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _coerce(tp, value, where):
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        (item,) = get_args(tp)
        return [_coerce(item, v, where) for v in value]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        _, item = get_args(tp)
        return {str(k): _coerce(item, v, f"{where}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data or {}, "").validate()


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def bundled_scenarios() -> list[str]:
    root = resources.files("fogdomain") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_path(name: str) -> Path:
    if not name.endswith(".yaml"):
        name += ".yaml"
    return Path(str(resources.files("fogdomain") / "scenarios" / name))
