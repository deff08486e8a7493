"""Domain smart contracts as deterministic state machines.

Five contracts share one state object because a solve transaction touches
several of them at once:

* ``DDR`` node registry
* ``DEL`` cluster-event choreography (event, reply, vote, solve)
* ``DCR`` desired state of services and containers
* ``DRS`` reputation counters
* ``IDR`` append-only inter-domain metadata sink

Every mutating method returns the list of ``(log_kind, payload)`` pairs it
emits; the ledger stamps them with block height and time.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
from typing import Any, Iterable, Optional

CONTRACT_NAMES = ("DDR", "DEL", "DCR", "DRS", "IDR")

LOG_KINDS = (
    "ServiceRegistered",
    "ContainerRegistered",
    "NewEvent",
    "RequiredReplies",
    "RequiredVotes",
    "EventSolved",
    "ReputationUpdated",
)


def node_sort_key(node_id: str) -> tuple:
    """Natural ordering so that node2 < node10."""
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", node_id))


class ContractError(Exception):
    """Base class; the class name is what lands in a rejected-tx record."""


class AlreadyRegistered(ContractError):
    pass


class UnregisteredSender(ContractError):
    pass


class UnknownNode(ContractError):
    pass


class DuplicateServiceId(ContractError):
    pass


class UnknownContainer(ContractError):
    pass


class UnknownEvent(ContractError):
    pass


class ConcurrentEventForContainer(ContractError):
    pass


class NotCurrentHost(ContractError):
    pass


class WrongPhase(ContractError):
    pass


class DuplicateReply(ContractError):
    pass


class CreatorCannotReply(ContractError):
    pass


class DuplicateVote(ContractError):
    pass


class InvalidCandidate(ContractError):
    pass


class NotElectedSolver(ContractError):
    pass


class InvalidReport(ContractError):
    pass


class UnknownMethod(ContractError):
    pass


class EventType(str, Enum):
    DEPLOY = "Deploy"
    MIGRATE = "Migrate"


class Phase(IntEnum):
    OPEN = 0
    REPLIES_COLLECTED = 1
    SOLVER_ELECTED = 2
    SOLVED = 3


@dataclass
class NodeRecord:
    node_id: str
    data_ip: str
    registered_at: int


@dataclass
class ContainerSpec:
    container_id: str
    image_profile_name: str
    exposed_port: int


@dataclass
class ServiceSpec:
    service_id: str
    vip: str
    port: int
    proto: str
    containers: list[ContainerSpec] = field(default_factory=list)

    def to_args(self) -> dict:
        return asdict(self)

    @classmethod
    def from_args(cls, args: dict) -> "ServiceSpec":
        return cls(
            service_id=args["service_id"], vip=args["vip"], port=int(args["port"]),
            proto=args["proto"], containers=[ContainerSpec(**c) for c in args.get("containers", [])],
        )


@dataclass
class ServiceRecord:
    service_id: str
    owner: str
    containers: list[str]
    virtual_endpoint: tuple
    status: str = "Registered"  # Registered | Active | Inactive | Deleted


@dataclass
class ContainerRecord:
    container_id: str
    service_id: str
    image_profile_name: str
    exposed_port: int
    desired_host: Optional[str] = None
    current_host: Optional[str] = None
    status: str = "Registered"  # Registered | Deploying | Running | Migrating | Removed


@dataclass(frozen=True)
class StateReport:
    node_id: str
    free_cpu_fraction: float
    free_mem_fraction: float
    running_containers: int

    def __post_init__(self):
        for name in ("free_cpu_fraction", "free_mem_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidReport(f"{name}={value} outside [0, 1]")
        if self.running_containers < 0:
            raise InvalidReport("running_containers must be >= 0")

    @property
    def free_capacity(self) -> float:
        return self.free_cpu_fraction + self.free_mem_fraction

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClusterEvent:
    event_id: str
    event_type: EventType
    container_id: str
    applicant_or_owner: str
    reply_threshold: int
    vote_threshold: int
    opened_at: int
    reason: str = "scripted"
    creator_report: Optional[StateReport] = None
    phase: Phase = Phase.OPEN
    replies: dict = field(default_factory=dict)
    votes: dict = field(default_factory=dict)
    elected_solver: Optional[str] = None
    solved_at: Optional[int] = None
    phase_times: dict = field(default_factory=dict)


def elect(votes: Iterable[str]) -> str:
    """Plurality winner; ties go to the lowest node id."""
    tally = Counter(votes)
    if not tally:
        raise ValueError("no votes")
    best = max(tally.values())
    return min((node for node, count in tally.items() if count == best), key=node_sort_key)


@dataclass
class ContractConfig:
    reply_threshold: Optional[int] = None  # default N - 1
    vote_threshold: Optional[int] = None   # default N
    owner_may_solve: bool = True


class DomainContracts:
    def __init__(self, config: Optional[ContractConfig] = None):
        self.config = config or ContractConfig()
        self.nodes: dict[str, NodeRecord] = {}
        self.services: dict[str, ServiceRecord] = {}
        self.containers: dict[str, ContainerRecord] = {}
        self.events: dict[str, ClusterEvent] = {}
        self.open_event_by_container: dict[str, str] = {}
        self.reputation: dict[str, int] = {}
        self.idr_records: list[dict] = []
        self._event_counter = 0
        self._methods = {
            ("DDR", "register_node"): self.ddr_register_node,
            ("DCR", "register_service"): self.dcr_register_service,
            ("DEL", "new_event"): self.del_new_event,
            ("DEL", "send_reply"): self.del_send_reply,
            ("DEL", "send_vote"): self.del_send_vote,
            ("DEL", "solve_event"): self.del_solve_event,
            ("DRS", "adjust"): self.drs_adjust,
            ("IDR", "record"): self.idr_record,
        }

    # -- read helpers -----------------------------------------------------
    @property
    def cluster_size(self) -> int:
        return len(self.nodes)

    def node_ids(self) -> list[str]:
        return sorted(self.nodes, key=node_sort_key)

    def is_registered(self, node_id: str) -> bool:
        return node_id in self.nodes

    def default_thresholds(self) -> tuple[int, int]:
        n = self.cluster_size
        replies = self.config.reply_threshold if self.config.reply_threshold is not None else n - 1
        votes = self.config.vote_threshold if self.config.vote_threshold is not None else n
        return replies, votes

    def is_eligible(self, event: ClusterEvent, candidate: str) -> bool:
        if candidate not in self.nodes:
            return False
        if event.event_type == EventType.MIGRATE and candidate == event.applicant_or_owner:
            return False
        if (event.event_type == EventType.DEPLOY and not self.config.owner_may_solve
                and candidate == event.applicant_or_owner):
            return False
        return True

    def execute(self, contract: str, method: str, sender: str, args: dict, now: int) -> list:
        try:
            handler = self._methods[(contract, method)]
        except KeyError:
            raise UnknownMethod(f"{contract}.{method}") from None
        return handler(sender, now=now, **args)

    def _require_sender(self, sender: str) -> None:
        if sender not in self.nodes:
            raise UnregisteredSender(sender)

    def _event(self, event_id: str) -> ClusterEvent:
        try:
            return self.events[event_id]
        except KeyError:
            raise UnknownEvent(event_id) from None

    # -- DDR ---------------------------------------------------------------
    def ddr_register_node(self, sender: str, *, now: int, data_ip: str, node_id: Optional[str] = None) -> list:
        node_id = node_id or sender
        if node_id in self.nodes:
            raise AlreadyRegistered(node_id)
        self.nodes[node_id] = NodeRecord(node_id, data_ip, now)
        self.reputation.setdefault(node_id, 0)
        return []

    # -- DCR ---------------------------------------------------------------
    def dcr_register_service(self, sender: str, *, now: int, spec: dict) -> list:
        self._require_sender(sender)
        service = ServiceSpec.from_args(spec)
        if service.service_id in self.services:
            raise DuplicateServiceId(service.service_id)
        for c in service.containers:
            if c.container_id in self.containers:
                raise DuplicateServiceId(f"container {c.container_id} already registered")
        endpoint = (service.vip, service.port, service.proto)
        self.services[service.service_id] = ServiceRecord(
            service.service_id, sender, [c.container_id for c in service.containers], endpoint)
        logs = [("ServiceRegistered", {
            "service_id": service.service_id, "owner": sender,
            "vip": service.vip, "port": service.port, "proto": service.proto,
            "containers": [c.container_id for c in service.containers],
        })]
        for c in service.containers:
            self.containers[c.container_id] = ContainerRecord(
                c.container_id, service.service_id, c.image_profile_name, c.exposed_port)
            logs.append(("ContainerRegistered", {
                "service_id": service.service_id, "container_id": c.container_id, "owner": sender,
                "image_profile_name": c.image_profile_name, "exposed_port": c.exposed_port,
            }))
        return logs

    # -- DEL ---------------------------------------------------------------
    def del_new_event(self, sender: str, *, now: int, event_type: str, container_id: str,
                      report: Optional[dict] = None, reason: str = "scripted") -> list:
        self._require_sender(sender)
        kind = EventType(event_type)
        container = self.containers.get(container_id)
        if container is None:
            raise UnknownContainer(container_id)
        if container_id in self.open_event_by_container:
            raise ConcurrentEventForContainer(
                f"{container_id} already in {self.open_event_by_container[container_id]}")
        if kind == EventType.MIGRATE and container.current_host != sender:
            raise NotCurrentHost(f"{sender} does not host {container_id}")
        if kind == EventType.DEPLOY and container.current_host is not None:
            raise WrongPhase(f"{container_id} is already deployed on {container.current_host}")
        creator_report = StateReport(**report) if report is not None else None
        self._event_counter += 1
        event_id = f"ev-{self._event_counter:06d}"
        replies, votes = self.default_thresholds()
        event = ClusterEvent(event_id, kind, container_id, sender, replies, votes, now,
                             reason=reason, creator_report=creator_report)
        event.phase_times[Phase.OPEN.name] = now
        self.events[event_id] = event
        self.open_event_by_container[container_id] = event_id
        container.status = "Deploying" if kind == EventType.DEPLOY else "Migrating"
        payload = {
            "event_id": event_id, "event_type": kind.value, "container_id": container_id,
            "service_id": container.service_id, "creator": sender, "reason": reason,
            "creator_report": creator_report.to_dict() if creator_report else None,
        }
        logs = [("NewEvent", payload)]
        if replies <= 0:
            logs.extend(self._collect_replies(event, now))
        return logs

    def _collect_replies(self, event: ClusterEvent, now: int) -> list:
        event.phase = Phase.REPLIES_COLLECTED
        event.phase_times[Phase.REPLIES_COLLECTED.name] = now
        return [("RequiredReplies", {
            "event_id": event.event_id, "event_type": event.event_type.value,
            "container_id": event.container_id, "creator": event.applicant_or_owner,
            "replies": [event.replies[n].to_dict() for n in sorted(event.replies, key=node_sort_key)],
            "creator_report": event.creator_report.to_dict() if event.creator_report else None,
        })]

    def del_send_reply(self, sender: str, *, now: int, event_id: str, report: dict) -> list:
        self._require_sender(sender)
        event = self._event(event_id)
        if event.phase != Phase.OPEN:
            raise WrongPhase(f"{event_id} is {event.phase.name}")
        if sender == event.applicant_or_owner:
            raise CreatorCannotReply(sender)
        if sender in event.replies:
            raise DuplicateReply(sender)
        state = StateReport(**{**report, "node_id": sender})
        event.replies[sender] = state
        if len(event.replies) == event.reply_threshold:
            return self._collect_replies(event, now)
        return []

    def del_send_vote(self, sender: str, *, now: int, event_id: str, candidate: str) -> list:
        self._require_sender(sender)
        event = self._event(event_id)
        if event.phase != Phase.REPLIES_COLLECTED:
            raise WrongPhase(f"{event_id} is {event.phase.name}")
        if sender in event.votes:
            raise DuplicateVote(sender)
        if not self.is_eligible(event, candidate):
            raise InvalidCandidate(candidate)
        event.votes[sender] = candidate
        if len(event.votes) < event.vote_threshold:
            return []
        event.elected_solver = elect(event.votes.values())
        event.phase = Phase.SOLVER_ELECTED
        event.phase_times[Phase.SOLVER_ELECTED.name] = now
        return [("RequiredVotes", {
            "event_id": event_id, "event_type": event.event_type.value,
            "container_id": event.container_id, "creator": event.applicant_or_owner,
            "elected_solver": event.elected_solver,
            "votes": {voter: event.votes[voter] for voter in sorted(event.votes, key=node_sort_key)},
        })]

    def del_solve_event(self, sender: str, *, now: int, event_id: str) -> list:
        self._require_sender(sender)
        event = self._event(event_id)
        if event.phase != Phase.SOLVER_ELECTED:
            raise WrongPhase(f"{event_id} is {event.phase.name}")
        if sender != event.elected_solver:
            raise NotElectedSolver(f"{sender} is not {event.elected_solver}")
        container = self.containers[event.container_id]
        service = self.services[container.service_id]
        previous_host = container.current_host
        event.phase = Phase.SOLVED
        event.solved_at = now
        event.phase_times[Phase.SOLVED.name] = now
        del self.open_event_by_container[event.container_id]
        container.current_host = sender
        container.desired_host = sender
        container.status = "Running"
        if event.event_type == EventType.DEPLOY:
            service.status = "Active"
        vip, port, proto = service.virtual_endpoint
        logs = [("EventSolved", {
            "event_id": event_id, "event_type": event.event_type.value,
            "container_id": event.container_id, "service_id": service.service_id,
            "solver": sender, "applicant": event.applicant_or_owner, "previous_host": previous_host,
            "vip": vip, "port": port, "proto": proto,
        })]
        logs.extend(self.drs_adjust(sender, now=now, node_id=sender, delta=1, _internal=True))
        if event.event_type == EventType.MIGRATE and event.reason == "resource_exhaustion":
            logs.extend(self.drs_adjust(sender, now=now, node_id=event.applicant_or_owner,
                                        delta=-1, _internal=True))
        self.idr_record(sender, now=now, metadata={
            "event_id": event_id, "service_id": service.service_id, "vip": vip, "port": port,
            "proto": proto, "host": sender,
        })
        return logs

    # -- DRS / IDR ---------------------------------------------------------
    def drs_adjust(self, sender: str, *, now: int, node_id: str, delta: int, _internal: bool = False) -> list:
        if not _internal:
            self._require_sender(sender)
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        self.reputation[node_id] = self.reputation.get(node_id, 0) + int(delta)
        return [("ReputationUpdated", {"node_id": node_id, "delta": int(delta),
                                       "score": self.reputation[node_id]})]

    def idr_record(self, sender: str, *, now: int, metadata: dict) -> list:
        self.idr_records.append({"recorded_at": now, **metadata})
        return []
