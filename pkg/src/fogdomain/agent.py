"""Per-node manager/monitor driving the orchestration workflow.

Agents never read each other's state. They learn about the cluster from
ledger logs (and read-only chain state), act on their local container
runtime, and reach the SDN controller through the virtual services
interface.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .contracts import ContractConfig, EventType, ServiceSpec, StateReport, node_sort_key
from .ledger import ContractCall, ContractLog, Ledger, Receipt
from .netsim import Scheduler, ms
from .runtime import ContainerInstance, ContainerRuntime, ContainerState, ImageProfile
from .sdn import BackendEndpoint, VirtualServicesInterface, vs_key

log = logging.getLogger(__name__)


@dataclass
class AgentConfig:
    node_id: str
    data_ip: str
    health_gating: bool = True
    owner_may_solve: bool = True
    migration_cutover: str = "overlap"  # overlap | atomic
    max_running_containers: Optional[int] = None
    max_cpu_utilization: Optional[float] = None
    monitor_interval_ms: float = 1000.0
    drain_ms: float = 0.0


@dataclass
class PendingAction:
    event_id: str
    role: str  # Owner | Applicant | Voter | Solver
    step: str


class VoteStrategy(Protocol):
    def choose(self, voter: str, event: dict, reports: dict[str, StateReport],
               candidates: list[str]) -> str: ...


class FreeCapacityVote:
    """Vote for the candidate with the most free CPU + memory."""

    def choose(self, voter, event, reports, candidates):
        return min(candidates, key=lambda n: (-round(reports[n].free_capacity, 9), node_sort_key(n)))


class RandomVote:
    def __init__(self, seed):
        self.rng = random.Random(seed)

    def choose(self, voter, event, reports, candidates):
        return self.rng.choice(candidates)


@dataclass
class EpisodeNotes:
    """Agent-side timestamps for one event, in microseconds."""

    container_created_at: Optional[int] = None
    container_ready_at: Optional[int] = None
    backend_registered_at: Optional[int] = None
    activated_at: Optional[int] = None
    solve_submitted_at: Optional[int] = None
    backend_removed_at: Optional[int] = None
    cleanup_done_at: Optional[int] = None


class NodeAgent:
    def __init__(self, config: AgentConfig, scheduler: Scheduler, ledger: Ledger,
                 runtime: ContainerRuntime, vsi: VirtualServicesInterface,
                 profiles: dict[str, ImageProfile], strategy: Optional[VoteStrategy] = None):
        self.config = config
        self.node_id = config.node_id
        self.scheduler = scheduler
        self.ledger = ledger
        self.runtime = runtime
        self.vsi = vsi
        self.profiles = profiles
        self.strategy = strategy or FreeCapacityVote()
        self.pending: dict[str, PendingAction] = {}
        self.events: dict[str, dict] = {}
        self.open_containers: set[str] = set()
        self.triggering: set[str] = set()
        self.host_view: dict[str, str] = {}
        self.notes: dict[str, EpisodeNotes] = {}
        self.stuck: list[str] = []
        self.on_cleanup: list[Callable[[str, str], None]] = []
        self._awaiting: dict[str, str] = {}  # container id -> event id (solver waiting on runtime)
        self.received: list[tuple[int, int]] = []  # (block height, log index) in delivery order
        self.subscription = ledger.subscribe_logs(self.node_id, self.on_log)
        runtime.listeners.append(self._on_runtime)

    # -- helpers ---------------------------------------------------------------
    @property
    def chain(self):
        return self.ledger.contracts

    def _submit(self, contract: str, method: str, args: dict,
                on_receipt: Optional[Callable[[Receipt], None]] = None) -> int:
        return self.ledger.submit_transaction(self.node_id, ContractCall(contract, method, args),
                                              on_receipt=on_receipt)

    def snapshot(self) -> StateReport:
        cpu, mem = self.runtime.free_fractions()
        return StateReport(self.node_id, cpu, mem, self.runtime.running_count)

    def _note(self, event_id: str) -> EpisodeNotes:
        return self.notes.setdefault(event_id, EpisodeNotes())

    # -- owner -----------------------------------------------------------------
    def register(self) -> int:
        return self._submit("DDR", "register_node", {"data_ip": self.config.data_ip})

    def deploy_service(self, spec: ServiceSpec) -> str:
        self._submit("DCR", "register_service", {"spec": spec.to_args()})
        return spec.service_id

    # -- log dispatch ----------------------------------------------------------
    def on_log(self, entry: ContractLog) -> None:
        self.received.append((entry.block_height, entry.index))
        handler = {
            "ServiceRegistered": self.on_service_registered,
            "ContainerRegistered": self.on_container_registered,
            "NewEvent": self.on_new_event,
            "RequiredReplies": self.on_required_replies,
            "RequiredVotes": self.on_required_votes,
            "EventSolved": self.on_event_solved,
        }.get(entry.log_kind)
        if handler is not None:
            handler(entry.payload)

    def on_service_registered(self, p: dict) -> None:
        if p["owner"] != self.node_id:
            return
        self.vsi.call("register", None, vip=p["vip"], port=p["port"], proto=p["proto"])

    def on_container_registered(self, p: dict) -> None:
        if p["owner"] != self.node_id:
            return
        self.open_event(EventType.DEPLOY, p["container_id"])

    def open_event(self, event_type: EventType, container_id: str, reason: str = "scripted") -> int:
        self.triggering.add(container_id)

        def receipt(r: Receipt, container_id=container_id) -> None:
            if not r.ok:
                self.triggering.discard(container_id)
                log.debug("%s: new_event for %s rejected: %s", self.node_id, container_id, r.error)

        return self._submit("DEL", "new_event", {
            "event_type": event_type.value, "container_id": container_id,
            "report": self.snapshot().to_dict(), "reason": reason,
        }, receipt)

    # -- voter -----------------------------------------------------------------
    def on_new_event(self, p: dict) -> None:
        event_id = p["event_id"]
        self.events[event_id] = p
        self.open_containers.add(p["container_id"])
        self.triggering.discard(p["container_id"])
        if p["creator"] == self.node_id:
            role = "Owner" if p["event_type"] == EventType.DEPLOY.value else "Applicant"
            self.pending[event_id] = PendingAction(event_id, role, "await-votes")
            return
        self.pending[event_id] = PendingAction(event_id, "Voter", "await-replies")
        report = self.snapshot().to_dict()
        report.pop("node_id")
        self._submit("DEL", "send_reply", {"event_id": event_id, "report": report})

    def candidates(self, p: dict) -> tuple[dict[str, StateReport], list[str]]:
        reports = {r["node_id"]: StateReport(**r) for r in p["replies"]}
        if p.get("creator_report"):
            reports.setdefault(p["creator"], StateReport(**p["creator_report"]))
        reports.setdefault(self.node_id, self.snapshot())
        applicant = p["creator"]
        eligible = []
        for node in self.chain.node_ids():
            if p["event_type"] == EventType.MIGRATE.value and node == applicant:
                continue
            if (p["event_type"] == EventType.DEPLOY.value and not self.config.owner_may_solve
                    and node == applicant):
                continue
            eligible.append(node)
        known = [n for n in eligible if n in reports]
        return reports, known or eligible

    def on_required_replies(self, p: dict) -> None:
        event_id = p["event_id"]
        reports, candidates = self.candidates(p)
        if not candidates:
            self.stuck.append(event_id)
            return
        if candidates[0] not in reports:
            choice = min(candidates, key=node_sort_key)
        else:
            choice = self.strategy.choose(self.node_id, p, reports, candidates)
        action = self.pending.get(event_id)
        if action is not None:
            action.step = "await-solver"
        self._submit("DEL", "send_vote", {"event_id": event_id, "candidate": choice})

    # -- solver ----------------------------------------------------------------
    def on_required_votes(self, p: dict) -> None:
        event_id = p["event_id"]
        if p["elected_solver"] != self.node_id:
            action = self.pending.get(event_id)
            if action is not None:
                action.step = "await-solved"
            return
        self.pending[event_id] = PendingAction(event_id, "Solver", "create-container")
        record = self.chain.containers[p["container_id"]]
        profile = self.profiles[record.image_profile_name]
        try:
            inst = self.runtime.create_container(record.container_id, profile)
        except Exception as exc:  # runtime errors leave the event unsolved
            log.warning("%s: cannot create %s: %s", self.node_id, record.container_id, exc)
            self.stuck.append(event_id)
            return
        self._note(event_id).container_created_at = self.scheduler.now
        self._awaiting[record.container_id] = event_id
        self.pending[event_id].step = "await-healthy" if self.config.health_gating else "await-running"
        if self._ready(inst):
            self._container_ready(inst)

    def _ready(self, inst: ContainerInstance) -> bool:
        if self.config.health_gating:
            return inst.state == ContainerState.HEALTHY
        return inst.state in (ContainerState.RUNNING, ContainerState.HEALTHY)

    def _on_runtime(self, kind: str, inst: ContainerInstance) -> None:
        if inst.container_id in self._awaiting and kind in ("running", "healthy") and self._ready(inst):
            self._container_ready(inst)

    def _container_ready(self, inst: ContainerInstance) -> None:
        event_id = self._awaiting.pop(inst.container_id)
        self._note(event_id).container_ready_at = self.scheduler.now
        self.pending[event_id].step = "register-backend"
        p = self.events.get(event_id) or {}
        record = self.chain.containers[inst.container_id]
        service = self.chain.services[record.service_id]
        vs_id = vs_key(*service.virtual_endpoint)
        standby = (p.get("event_type") == EventType.MIGRATE.value
                   and self.config.migration_cutover == "atomic")
        endpoint = BackendEndpoint(self.config.data_ip, record.exposed_port,
                                   healthy=inst.state == ContainerState.HEALTHY, standby=standby)

        def upserted(snapshot, error, event_id=event_id, vs_id=vs_id):
            if error is not None:
                log.warning("%s: upsert failed for %s: %s", self.node_id, event_id, error)
                self.stuck.append(event_id)
                return
            self._note(event_id).backend_registered_at = self.scheduler.now
            if snapshot["active"]:
                self._solve(event_id)
            else:
                self.vsi.call("set_active", lambda s, e: self._activated(event_id, e),
                              vs_id=vs_id, active=True)

        self.vsi.call("upsert_backend", upserted, vs_id=vs_id, endpoint=endpoint)

    def _activated(self, event_id: str, error) -> None:
        if error is not None:
            self.stuck.append(event_id)
            return
        self._note(event_id).activated_at = self.scheduler.now
        self._solve(event_id)

    def _solve(self, event_id: str) -> None:
        self.pending[event_id].step = "await-solved"
        self._note(event_id).solve_submitted_at = self.scheduler.now
        self._submit("DEL", "solve_event", {"event_id": event_id})

    # -- applicant cleanup ---------------------------------------------------
    def on_event_solved(self, p: dict) -> None:
        event_id = p["event_id"]
        self.pending.pop(event_id, None)
        self.open_containers.discard(p["container_id"])
        self.host_view[p["container_id"]] = p["solver"]
        if p["event_type"] != EventType.MIGRATE.value or p["applicant"] != self.node_id:
            return
        if p["previous_host"] != self.node_id:
            return
        vs_id = vs_key(p["vip"], p["port"], p["proto"])
        container_id = p["container_id"]
        inst = self.runtime.containers.get(container_id)
        port = inst.profile.port if inst is not None else None

        def stop(_purged=None, error=None):
            if error is not None:
                log.warning("%s: purge_flows failed: %s", self.node_id, error)
            self.runtime.stop_container(container_id)
            self._note(event_id).cleanup_done_at = self.scheduler.now
            for hook in self.on_cleanup:
                hook(event_id, container_id)

        def drained():
            if port is None:
                stop()
                return
            self.vsi.call("purge_flows", stop, vs_id=vs_id, node_ip=self.config.data_ip, port=port)

        drain = self.config.drain_ms > 0

        def removed(_snapshot, error):
            if error is not None:
                log.warning("%s: remove_backend failed: %s", self.node_id, error)
            self._note(event_id).backend_removed_at = self.scheduler.now
            if drain:
                # let connections already admitted to the old instance finish
                self.scheduler.after(ms(self.config.drain_ms), drained)
            else:
                stop()

        self.vsi.call("remove_backend", removed, vs_id=vs_id, node_ip=self.config.data_ip, keep_flows=drain)

    # -- monitor -----------------------------------------------------------------
    def hosted_containers(self) -> list[ContainerInstance]:
        return [c for c in self.runtime.live() if self.host_view.get(c.container_id) == self.node_id]

    def detect_problem(self, now: Optional[int] = None, scripted: bool = False) -> Optional[int]:
        """Open a Migrate event for the hungriest hosted container if needed."""
        hosted = [c for c in self.hosted_containers()
                  if c.container_id not in self.open_containers and c.container_id not in self.triggering]
        if not hosted:
            return None
        if not scripted and not self._over_threshold():
            return None
        victim = min(hosted, key=lambda c: (-(c.profile.cpu_demand + c.profile.mem_demand), c.container_id))
        reason = "scripted" if scripted else "resource_exhaustion"
        return self.open_event(EventType.MIGRATE, victim.container_id, reason)

    def _over_threshold(self) -> bool:
        cfg = self.config
        if cfg.max_running_containers is not None and self.runtime.running_count > cfg.max_running_containers:
            return True
        if cfg.max_cpu_utilization is not None:
            cpu_free, _ = self.runtime.free_fractions()
            if 1.0 - cpu_free > cfg.max_cpu_utilization:
                return True
        return False

    def start_monitor(self) -> None:
        if self.config.max_running_containers is None and self.config.max_cpu_utilization is None:
            return
        self.scheduler.after(ms(self.config.monitor_interval_ms), self._monitor_tick)

    def _monitor_tick(self) -> None:
        self.detect_problem()
        self.scheduler.after(ms(self.config.monitor_interval_ms), self._monitor_tick)
