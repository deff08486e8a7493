"""Behavioral model of the SDN side of a domain.

One switch with an exact-match flow table, a controller hosting the virtual
services application, and the virtual services interface reached by node
agents over the control link.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, NamedTuple, Optional

from .netsim import LinkModel, Scheduler, ms


class EndpointInUse(ValueError):
    pass


class UnknownVirtualService(KeyError):
    pass


class UnknownBackend(KeyError):
    pass


class Proto(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


class FiveTuple(NamedTuple):
    src_ip: str
    src_port: int
    dst_vip: str
    dst_port: int
    proto: str


def vs_key(vip: str, port: int, proto: str) -> str:
    return f"vs:{vip}:{port}/{Proto(proto).value}"


@dataclass
class BackendEndpoint:
    node_ip: str
    port: int
    healthy: bool = True
    standby: bool = False

    @property
    def target(self) -> tuple[str, int]:
        return (self.node_ip, self.port)


@dataclass
class VirtualService:
    vs_id: str
    vip: str
    port: int
    proto: str
    active: bool = False
    backends: list[BackendEndpoint] = field(default_factory=list)
    rr_cursor: int = 0

    def snapshot(self) -> dict:
        return {
            "vs_id": self.vs_id, "vip": self.vip, "port": self.port, "proto": self.proto,
            "active": self.active, "rr_cursor": self.rr_cursor,
            "backends": [vars(b).copy() for b in self.backends],
        }

    def backend(self, node_ip: str) -> Optional[BackendEndpoint]:
        for b in self.backends:
            if b.node_ip == node_ip:
                return b
        return None


@dataclass
class FlowRule:
    match: FiveTuple
    vs_id: str
    target: tuple[str, int]
    installed_at: int
    last_used: int = 0
    cancelled: bool = False


@dataclass
class FlowTraceEntry:
    at: int
    op: str  # install | delete | expire
    match: FiveTuple
    target: tuple[str, int]
    reason: str = ""


class SwitchModel:
    """Single OpenFlow switch; lookups hit only on an exact 5-tuple match."""

    def __init__(self, packet_in_latency: int = ms(3), rule_install_latency: int = ms(3),
                 idle_timeout: Optional[int] = None):
        self.flow_table: dict[FiveTuple, FlowRule] = {}
        self.packet_in_latency = packet_in_latency
        self.rule_install_latency = rule_install_latency
        self.idle_timeout = idle_timeout
        self.installs = 0
        self.trace: list[FlowTraceEntry] = []

    def lookup(self, match: FiveTuple, now: int) -> Optional[FlowRule]:
        rule = self.flow_table.get(match)
        if rule is None:
            return None
        if self.idle_timeout is not None and now - rule.last_used > self.idle_timeout:
            del self.flow_table[match]
            self.trace.append(FlowTraceEntry(now, "expire", match, rule.target, "idle"))
            return None
        rule.last_used = now
        return rule

    def install(self, rule: FlowRule, now: int) -> None:
        if rule.match in self.flow_table:
            raise ValueError(f"duplicate rule for {rule.match}")
        rule.last_used = now
        self.flow_table[rule.match] = rule
        self.installs += 1
        self.trace.append(FlowTraceEntry(now, "install", rule.match, rule.target))

    def delete_where(self, predicate: Callable[[FlowRule], bool], now: int, reason: str) -> int:
        doomed = [m for m, r in self.flow_table.items() if predicate(r)]
        for match in doomed:
            rule = self.flow_table.pop(match)
            self.trace.append(FlowTraceEntry(now, "delete", match, rule.target, reason))
        return len(doomed)


class SdnController:
    """Virtual services application running on the controller."""

    def __init__(self, switch: Optional[SwitchModel] = None, health_gating: bool = True,
                 clock: Callable[[], int] = lambda: 0):
        self.switch = switch or SwitchModel()
        self.health_gating = health_gating
        self.clock = clock
        self.services: dict[str, VirtualService] = {}
        self.pending: dict[FiveTuple, FlowRule] = {}
        self.packet_ins = 0
        self.drops = 0

    def get(self, vs_id: str) -> VirtualService:
        try:
            return self.services[vs_id]
        except KeyError:
            raise UnknownVirtualService(vs_id) from None

    def find(self, vip: str, port: int, proto: str) -> Optional[VirtualService]:
        return self.services.get(vs_key(vip, port, proto))

    def register_virtual_service(self, vip: str, port: int, proto: str) -> str:
        vs_id = vs_key(vip, port, proto)
        if vs_id in self.services:
            raise EndpointInUse(vs_id)
        self.services[vs_id] = VirtualService(vs_id, vip, int(port), Proto(proto).value)
        return vs_id

    def upsert_backend(self, vs_id: str, endpoint: BackendEndpoint) -> VirtualService:
        vs = self.get(vs_id)
        existing = vs.backend(endpoint.node_ip)
        if existing is None:
            vs.backends.append(replace(endpoint))
        else:
            existing.port = endpoint.port
            existing.healthy = endpoint.healthy
            existing.standby = endpoint.standby
        return vs

    def remove_backend(self, vs_id: str, node_ip: str, keep_flows: bool = False) -> VirtualService:
        """Take a backend out of selection.

        With ``keep_flows`` established connections keep their rules (drain)
        and only rules still being installed are cancelled; call
        :meth:`purge_flows` once the drain is over.
        """
        vs = self.get(vs_id)
        backend = vs.backend(node_ip)
        if backend is None:
            raise UnknownBackend(f"{node_ip} not in {vs_id}")
        vs.backends.remove(backend)
        target = backend.target
        if keep_flows:
            for rule in self.pending.values():
                if rule.vs_id == vs_id and rule.target == target:
                    rule.cancelled = True
        else:
            self._drop_rules(lambda r: r.vs_id == vs_id and r.target == target, "backend-removed")
        if not any(not b.standby for b in vs.backends):
            for b in vs.backends:
                b.standby = False
        return vs

    def purge_flows(self, vs_id: str, node_ip: str, port: int) -> int:
        target = (node_ip, int(port))
        before = len(self.switch.flow_table)
        self._drop_rules(lambda r: r.vs_id == vs_id and r.target == target, "drained")
        return before - len(self.switch.flow_table)

    def set_active(self, vs_id: str, active: bool) -> VirtualService:
        vs = self.get(vs_id)
        vs.active = bool(active)
        if not vs.active:
            self._drop_rules(lambda r: r.vs_id == vs_id, "deactivated")
        return vs

    def _drop_rules(self, predicate: Callable[[FlowRule], bool], reason: str) -> None:
        self.switch.delete_where(predicate, self.clock(), reason)
        for rule in self.pending.values():
            if predicate(rule):
                rule.cancelled = True

    def eligible_backends(self, vs: VirtualService) -> list[BackendEndpoint]:
        usable = [b for b in vs.backends if b.healthy or not self.health_gating]
        primary = [b for b in usable if not b.standby]
        return primary or usable

    def select_backend(self, vs: VirtualService) -> Optional[BackendEndpoint]:
        candidates = self.eligible_backends(vs)
        if not candidates:
            return None
        chosen = candidates[vs.rr_cursor % len(candidates)]
        vs.rr_cursor += 1
        return chosen

    def packet_in(self, match: FiveTuple, now: int) -> Optional[FlowRule]:
        """Resolve a table miss; None means drop.

        The returned rule takes effect at ``installed_at`` and is only placed
        in the table by :meth:`commit`.
        """
        existing = self.switch.flow_table.get(match)
        if existing is not None:
            return existing
        self.packet_ins += 1
        vs = self.find(match.dst_vip, match.dst_port, match.proto)
        backend = self.select_backend(vs) if vs is not None and vs.active else None
        if backend is None:
            self.drops += 1
            return None
        rule = FlowRule(match, vs.vs_id, backend.target,
                        now + self.switch.packet_in_latency + self.switch.rule_install_latency)
        self.pending[match] = rule
        return rule

    def commit(self, rule: FlowRule, now: int) -> Optional[FlowRule]:
        """Write a pending rule to the switch unless it was invalidated meanwhile."""
        if self.pending.get(rule.match) is rule:
            del self.pending[rule.match]
        if rule.cancelled:
            return None
        if rule.match in self.switch.flow_table:
            return self.switch.flow_table[rule.match]
        self.switch.install(rule, now)
        return rule


class VirtualServicesInterface:
    """Control-link message API in front of the controller.

    Each call is applied one link delay after it is issued and the reply
    arrives one more link delay later as ``reply(result, error)``.
    """

    OPS = ("register", "upsert_backend", "remove_backend", "purge_flows", "set_active", "get")

    def __init__(self, scheduler: Scheduler, controller: SdnController, link: LinkModel):
        self.scheduler = scheduler
        self.controller = controller
        self.link = link
        self.log: list[tuple[int, str, dict]] = []

    def call(self, op: str, reply: Optional[Callable[[Any, Optional[Exception]], Any]] = None,
             **kwargs: Any) -> None:
        if op not in self.OPS:
            raise ValueError(f"unknown virtual services op {op!r}")
        self.scheduler.after(self.link.delay(), self._apply, op, reply, kwargs)

    def _apply(self, op: str, reply, kwargs: dict) -> None:
        c = self.controller
        self.log.append((self.scheduler.now, op, kwargs))
        result: Any = None
        error: Optional[Exception] = None
        try:
            if op == "register":
                result = c.register_virtual_service(kwargs["vip"], kwargs["port"], kwargs["proto"])
            elif op == "upsert_backend":
                result = c.upsert_backend(kwargs["vs_id"], kwargs["endpoint"]).snapshot()
            elif op == "remove_backend":
                result = c.remove_backend(kwargs["vs_id"], kwargs["node_ip"],
                                          kwargs.get("keep_flows", False)).snapshot()
            elif op == "purge_flows":
                result = c.purge_flows(kwargs["vs_id"], kwargs["node_ip"], kwargs["port"])
            elif op == "set_active":
                result = c.set_active(kwargs["vs_id"], kwargs["active"]).snapshot()
            else:
                result = c.get(kwargs["vs_id"]).snapshot()
        except (EndpointInUse, UnknownVirtualService, UnknownBackend) as exc:
            error = exc
        if reply is not None:
            self.scheduler.after(self.link.delay(), reply, result, error)
