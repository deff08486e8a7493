"""Container runtime model for one fog node.

Containers go Created -> Starting -> Running -> Healthy and finally Stopped.
A running container accepts connections straight away, but requests are
queued until its internal initialization finishes; the periodic health check
is what tells the two situations apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Optional

from .netsim import Scheduler, SimEvent, ms


class DuplicateContainer(ValueError):
    pass


class UnknownContainer(KeyError):
    pass


class ContainerStopped(RuntimeError):
    pass


class ConnectionMode(str, Enum):
    PER_REQUEST = "PerRequest"
    PERSISTENT_STREAM = "PersistentStream"


class ContainerState(IntEnum):
    CREATED = 0
    STARTING = 1
    RUNNING = 2
    HEALTHY = 3
    STOPPED = 4


@dataclass(frozen=True)
class ImageProfile:
    name: str
    startup_time_ms: float
    processing_ms: float
    connection_mode: ConnectionMode = ConnectionMode.PER_REQUEST
    cpu_demand: float = 0.1
    mem_demand: float = 0.1
    port: int = 8080

    def __post_init__(self):
        if self.startup_time_ms < 0 or self.processing_ms < 0:
            raise ValueError(f"profile {self.name}: durations must be >= 0")

    @property
    def startup_time(self) -> int:
        return ms(self.startup_time_ms)

    @property
    def processing(self) -> int:
        return ms(self.processing_ms)


# Fitted to the reported observations, not measured container parameters.
DEFAULT_PROFILES: dict[str, ImageProfile] = {
    "nginx": ImageProfile("nginx", 1000.0, 2.0, ConnectionMode.PER_REQUEST, 0.10, 0.05, 8080),
    "nextcloud": ImageProfile("nextcloud", 3000.0, 317.0, ConnectionMode.PER_REQUEST, 0.30, 0.25, 8081),
    "postgres": ImageProfile("postgres", 2000.0, 4.0, ConnectionMode.PERSISTENT_STREAM, 0.20, 0.20, 5432),
}


@dataclass
class HealthCheckConfig:
    probe_interval_ms: float = 500.0
    probe_timeout_ms: float = 100.0
    consecutive_passes_required: int = 1

    def __post_init__(self):
        if self.probe_interval_ms <= 0:
            raise ValueError("probe_interval must be > 0")
        if self.consecutive_passes_required < 1:
            raise ValueError("consecutive_passes_required must be >= 1")


@dataclass
class ContainerInstance:
    container_id: str
    host: str
    profile: ImageProfile
    state: ContainerState
    created_at: int
    running_at: Optional[int] = None
    healthy_at: Optional[int] = None
    stopped_at: Optional[int] = None
    passes: int = 0
    in_flight: dict = field(default_factory=dict, repr=False)
    _timers: list = field(default_factory=list, repr=False)

    @property
    def initialized_at(self) -> int:
        return self.created_at + self.profile.startup_time

    @property
    def port(self) -> int:
        return self.profile.port


@dataclass
class ServeRecord:
    request_id: int
    container_id: str
    host: str
    state: str
    arrival: int
    response_at: Optional[int]


class ContainerRuntime:
    """Per-host container engine with its health check system.

    ``listeners`` are called as ``listener(kind, instance)`` with kind one of
    ``running``, ``healthy``, ``stopped``.
    """

    def __init__(self, scheduler: Scheduler, host: str, health: Optional[HealthCheckConfig] = None,
                 running_delay_ms: float = 0.0):
        self.scheduler = scheduler
        self.host = host
        self.health = health or HealthCheckConfig()
        self.running_delay = ms(running_delay_ms)
        self.containers: dict[str, ContainerInstance] = {}
        self.history: list[ContainerInstance] = []
        self.listeners: list[Callable[[str, ContainerInstance], None]] = []
        self.serve_log: list[ServeRecord] = []
        self.count_log: list[tuple[int, int]] = []

    # -- lifecycle -----------------------------------------------------------
    def live(self) -> list[ContainerInstance]:
        return [c for c in self.containers.values() if c.state != ContainerState.STOPPED]

    @property
    def running_count(self) -> int:
        return len(self.live())

    def instance_on_port(self, port: int) -> Optional[ContainerInstance]:
        for c in self.containers.values():
            if c.port == port and c.state != ContainerState.STOPPED:
                return c
        return None

    def free_fractions(self) -> tuple[float, float]:
        live = self.live()
        cpu = max(0.0, 1.0 - sum(c.profile.cpu_demand for c in live))
        mem = max(0.0, 1.0 - sum(c.profile.mem_demand for c in live))
        return round(cpu, 9), round(mem, 9)

    def create_container(self, container_id: str, profile: ImageProfile,
                         now: Optional[int] = None) -> ContainerInstance:
        now = self.scheduler.now if now is None else now
        current = self.containers.get(container_id)
        if current is not None and current.state != ContainerState.STOPPED:
            raise DuplicateContainer(f"{container_id} already on {self.host}")
        inst = ContainerInstance(container_id, self.host, profile, ContainerState.STARTING, now)
        self.containers[container_id] = inst
        self.history.append(inst)
        self.count_log.append((now, self.running_count))
        inst._timers.append(self.scheduler.schedule(now + self.running_delay, self._on_running, inst))
        return inst

    def _notify(self, kind: str, inst: ContainerInstance) -> None:
        for listener in list(self.listeners):
            listener(kind, inst)

    def _on_running(self, inst: ContainerInstance) -> None:
        if inst.state == ContainerState.STOPPED:
            return
        inst.state = ContainerState.RUNNING
        inst.running_at = self.scheduler.now
        self._notify("running", inst)
        self._schedule_probe(inst)

    def _schedule_probe(self, inst: ContainerInstance) -> None:
        ev = self.scheduler.after(ms(self.health.probe_interval_ms), self._run_probe, inst)
        inst._timers.append(ev)

    def _run_probe(self, inst: ContainerInstance) -> None:
        if inst.state == ContainerState.STOPPED:
            return
        self.probe(inst, self.scheduler.now)
        if inst.state != ContainerState.HEALTHY:
            self._schedule_probe(inst)

    def probe(self, inst: ContainerInstance, now: int) -> bool:
        """One health probe; returns True on pass."""
        if inst.state == ContainerState.STOPPED:
            return False
        passed = now >= inst.initialized_at
        if not passed:
            inst.passes = 0
            return False
        inst.passes += 1
        if inst.state != ContainerState.HEALTHY and inst.passes >= self.health.consecutive_passes_required:
            inst.state = ContainerState.HEALTHY
            inst.healthy_at = now
            self._notify("healthy", inst)
        return True

    def stop_container(self, container_id: str, now: Optional[int] = None) -> ContainerInstance:
        now = self.scheduler.now if now is None else now
        inst = self.containers.get(container_id)
        if inst is None:
            raise UnknownContainer(container_id)
        if inst.state == ContainerState.STOPPED:
            return inst
        inst.state = ContainerState.STOPPED
        inst.stopped_at = now
        for timer in inst._timers:
            timer.cancel()
        inst._timers.clear()
        in_flight, inst.in_flight = inst.in_flight, {}
        for request_id in sorted(in_flight):
            event, on_reset = in_flight[request_id]
            event.cancel()
            on_reset(now)
        self.count_log.append((now, self.running_count))
        self._notify("stopped", inst)
        return inst

    # -- request servicing ---------------------------------------------------
    @staticmethod
    def serve_request(inst: ContainerInstance, arrival: int) -> int:
        """Response time for a request arriving at ``arrival``."""
        if inst.state == ContainerState.STOPPED:
            raise ContainerStopped(inst.container_id)
        return max(arrival, inst.initialized_at) + inst.profile.processing

    def accept(self, port: int, request_id: int, on_response: Callable[[int, ContainerInstance], None],
               on_reset: Callable[[int], None]) -> Optional[ContainerInstance]:
        """Take a request off the wire; None means nothing listens (reset)."""
        now = self.scheduler.now
        inst = self.instance_on_port(port)
        if inst is None:
            return None
        done = self.serve_request(inst, now)
        self.serve_log.append(ServeRecord(request_id, inst.container_id, self.host, inst.state.name, now, done))

        def respond(inst=inst, request_id=request_id):
            inst.in_flight.pop(request_id, None)
            on_response(self.scheduler.now, inst)

        event: SimEvent = self.scheduler.schedule(done, respond)
        inst.in_flight[request_id] = (event, on_reset)
        return inst
