"""Wire every component of one domain together and run a scenario."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .agent import AgentConfig, FreeCapacityVote, NodeAgent, RandomVote
from .contracts import ContainerSpec, ContractConfig, DomainContracts, EventType, Phase, ServiceSpec
from .ledger import Ledger
from .metrics import RequestSample, SummaryStats, compute_summary, write_samples, write_summary
from .netsim import Scheduler, make_links, ms, seconds, to_ms
from .runtime import DEFAULT_PROFILES, ConnectionMode, ContainerRuntime, HealthCheckConfig, ImageProfile
from .scenario import ScenarioConfig
from .sdn import SdnController, SwitchModel
from .sdn import VirtualServicesInterface
from .tcp import ClientConfig, DataPlane, TcpClient
from .workload import RequestGenerator


def node_ids(n: int) -> list[str]:
    return [f"node{i}" for i in range(1, n + 1)]


def data_ip(i: int) -> str:
    return f"192.168.0.{10 + i}"


def effective_profiles(config: ScenarioConfig) -> dict[str, ImageProfile]:
    profiles = dict(DEFAULT_PROFILES)
    for name, override in config.profiles.items():
        base = profiles.get(name, ImageProfile(name, 0.0, 0.0))
        changes = {k: v for k, v in dataclasses.asdict(override).items() if v is not None}
        if "connection_mode" in changes:
            changes["connection_mode"] = ConnectionMode(changes["connection_mode"])
        profiles[name] = dataclasses.replace(base, **changes)
    return profiles


@dataclass
class RunResult:
    config: ScenarioConfig
    samples: list[RequestSample]
    summary: Optional[SummaryStats]
    episodes: list[dict]
    migrations_solved_ms: list[float]
    metadata: dict
    sim: "DomainSimulation" = field(repr=False)

    @property
    def stuck_episodes(self) -> list[str]:
        return [e["event_id"] for e in self.episodes if e["phase"] != Phase.SOLVED.name]


class DomainSimulation:
    def __init__(self, config: ScenarioConfig, strategy_factory=None):
        self.config = config
        c = config
        self.scheduler = Scheduler()
        self.links = make_links(c.seed, c.links.data_ms, c.links.sdn_control_ms,
                                c.links.control_link_ms, c.links.jitter_ms)
        self.contracts = DomainContracts(ContractConfig(c.contracts.reply_threshold, c.contracts.vote_threshold,
                                                        c.contracts.owner_may_solve))
        self.ledger = Ledger(self.scheduler, self.contracts, c.ledger.block_interval_ms,
                             c.ledger.notification_delay_ms, c.ledger.notification_jitter_ms, seed=c.seed)
        sdn_latency = ms(c.links.sdn_control_ms)
        idle = ms(c.sdn.idle_timeout_ms) if c.sdn.idle_timeout_ms is not None else None
        self.switch = SwitchModel(sdn_latency, sdn_latency, idle)
        self.controller = SdnController(self.switch, health_gating=c.H, clock=lambda: self.scheduler.now)
        self.vsi = VirtualServicesInterface(self.scheduler, self.controller, self.links["control_link"])
        self.profiles = effective_profiles(c)
        health = HealthCheckConfig(c.health.probe_interval_ms, c.health.probe_timeout_ms,
                                   c.health.consecutive_passes_required)

        self.runtimes: dict[str, ContainerRuntime] = {}
        self.agents: dict[str, NodeAgent] = {}
        self.ip_of: dict[str, str] = {}
        for i, node in enumerate(node_ids(c.cluster_size), start=1):
            ip = data_ip(i)
            self.ip_of[node] = ip
            runtime = ContainerRuntime(self.scheduler, node, health)
            self.runtimes[node] = runtime
            if strategy_factory is not None:
                strategy = strategy_factory(node)
            elif c.agents.vote_strategy == "random":
                strategy = RandomVote(f"{c.seed}:vote:{node}")
            else:
                strategy = FreeCapacityVote()
            agent_cfg = AgentConfig(node, ip, health_gating=c.H, owner_may_solve=c.contracts.owner_may_solve,
                                    migration_cutover=c.sdn.migration_cutover,
                                    max_running_containers=c.agents.max_running_containers,
                                    max_cpu_utilization=c.agents.max_cpu_utilization,
                                    monitor_interval_ms=c.agents.monitor_interval_ms,
                                    drain_ms=c.agents.drain_ms)
            agent = NodeAgent(agent_cfg, self.scheduler, self.ledger, runtime, self.vsi, self.profiles, strategy)
            agent.on_cleanup.append(self._check_orphans)
            self.agents[node] = agent

        self.dataplane = DataPlane(self.scheduler, self.links["data"], self.controller,
                                   {self.ip_of[n]: rt for n, rt in self.runtimes.items()})
        client_cfg = ClientConfig(c.client.src_ip, c.client.syn_timeout_ms, c.client.max_retries,
                                  c.client.response_timeout_ms, c.client.stream_rto_ms,
                                  c.client.stream_preconnect_ms)
        self.client = TcpClient(self.scheduler, self.dataplane, client_cfg)
        profile = self.profiles[c.profile]
        self.service_spec = ServiceSpec(
            f"svc-{c.profile}", c.service.vip, c.service.port, c.service.proto,
            [ContainerSpec(f"{c.profile}-{j}", c.profile, profile.port) for j in range(1, c.service.replicas + 1)],
        )
        self.workload_start = seconds(c.workload_start_s)
        self.generator = RequestGenerator(
            self.scheduler, self.client, c.service.vip, c.service.port, c.service.proto,
            profile.connection_mode, seconds(c.R), c.request_count, self.workload_start, c.client.drift_ppm,
        )
        self.orphan_violations: list[str] = []
        self.triggers: list[int] = []
        self.end_time = self.workload_start + seconds(c.duration_s) + seconds(c.drain_s)

    # -- timeline ------------------------------------------------------------
    def _check_orphans(self, event_id: str, container_id: str) -> None:
        live = sum(1 for rt in self.runtimes.values()
                   if rt.containers.get(container_id) is not None
                   and rt.containers[container_id].state.name != "STOPPED")
        if live != 1:
            self.orphan_violations.append(f"{event_id}: {live} live instances of {container_id}")

    def _trigger_migrations(self) -> None:
        self.triggers.append(self.scheduler.now)
        for node in node_ids(self.config.cluster_size):
            self.agents[node].detect_problem(scripted=True)

    def schedule_timeline(self) -> None:
        c = self.config
        for agent in self.agents.values():
            agent.register()
            agent.start_monitor()
        self.ledger.start()
        owner = self.agents[f"node{c.service.owner}"]
        self.scheduler.schedule(seconds(c.deploy_at_s), owner.deploy_service, self.service_spec)
        self.generator.start()
        for offset in c.migration_offsets_s():
            self.scheduler.schedule(self.workload_start + seconds(offset), self._trigger_migrations)

    def run(self) -> RunResult:
        self.schedule_timeline()
        self.scheduler.run(until=self.end_time)
        return self.result()

    # -- reporting -------------------------------------------------------------
    def episodes(self) -> list[dict]:
        out = []
        for ev in self.contracts.events.values():
            notes = {}
            for agent in self.agents.values():
                if ev.event_id in agent.notes:
                    for k, v in dataclasses.asdict(agent.notes[ev.event_id]).items():
                        if v is not None:
                            notes[k] = to_ms(v)
            out.append({
                "event_id": ev.event_id,
                "event_type": ev.event_type.value,
                "container_id": ev.container_id,
                "creator": ev.applicant_or_owner,
                "reason": ev.reason,
                "phase": ev.phase.name,
                "phase_times_ms": {k: to_ms(v) for k, v in ev.phase_times.items()},
                "replies": sorted(ev.replies),
                "votes": dict(ev.votes),
                "elected_solver": ev.elected_solver,
                "agent_notes_ms": dict(sorted(notes.items())),
            })
        return out

    def result(self) -> RunResult:
        c = self.config
        samples = self.generator.ordered_samples()
        migrations = sorted(to_ms(ev.solved_at) for ev in self.contracts.events.values()
                            if ev.event_type == EventType.MIGRATE and ev.solved_at is not None)
        summary = None
        if samples:
            summary = compute_summary(samples, migrations, duration_ms=c.duration_s * 1000.0,
                                      start_ms=to_ms(self.workload_start))
        return RunResult(c, samples, summary, self.episodes(), migrations, self.metadata(), self)

    def metadata(self) -> dict:
        c = self.config
        return {
            "config_hash": c.config_hash(),
            "seed": c.seed,
            "version": __version__,
            "config": c.to_dict(),
            "effective_profiles": {
                name: {**dataclasses.asdict(p), "connection_mode": p.connection_mode.value}
                for name, p in sorted(self.profiles.items())
            },
            "nodes": {n: self.ip_of[n] for n in node_ids(c.cluster_size)},
            "end_time_ms": to_ms(self.end_time),
        }


def run_scenario(config: ScenarioConfig, **kwargs) -> RunResult:
    return DomainSimulation(config, **kwargs).run()


# -- artifacts -------------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _jsonl(path: Path, header: dict, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps(header) + "\n")
        for row in rows:
            fh.write(_dumps(row) + "\n")


def write_artifacts(result: RunResult, out_dir) -> dict[str, Path]:
    """Write samples, summary, ledger/flow/serve traces, episodes and metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = result.sim
    c = result.config
    header = {"config_hash": result.metadata["config_hash"], "seed": c.seed, "kind": c.kind,
              "profile": c.profile, "R": c.R, "H": c.H, "name": c.name}
    paths = {name: out / fname for name, fname in (
        ("samples", "samples.jsonl"), ("summary", "summary.json"), ("ledger", "ledger.jsonl"),
        ("flows", "flows.jsonl"), ("serves", "serves.jsonl"), ("episodes", "episodes.json"),
        ("metadata", "metadata.json"))}

    write_samples(paths["samples"], result.samples, header)
    if result.summary is not None:
        write_summary(paths["summary"], result.summary, {**header, "duration_s": c.duration_s})
    else:
        paths["summary"].write_text(json.dumps({"schema": "fogdomain.summary/1", **header,
                                                "empty": True}, sort_keys=True, indent=2) + "\n")

    def blocks():
        for block in sim.ledger.blocks:
            if not block.txs:
                continue
            yield {
                "height": block.height, "produced_at_ms": to_ms(block.produced_at),
                "txs": [{"tx_id": tx.tx_id, "sender": tx.sender, "submitted_at_ms": to_ms(tx.submitted_at),
                         "call": f"{tx.payload.contract}.{tx.payload.method}", "args": tx.payload.args}
                        for tx in block.txs],
                "logs": [{"kind": lg.log_kind, "index": lg.index, "tx_id": lg.tx_id, "payload": lg.payload}
                         for lg in block.logs],
                "rejected": [dataclasses.asdict(r) for r in block.rejected],
            }

    _jsonl(paths["ledger"], {"schema": "fogdomain.ledger/1", **header,
                             "blocks_total": len(sim.ledger.blocks)}, blocks())
    _jsonl(paths["flows"], {"schema": "fogdomain.flows/1", **header, "installs": sim.switch.installs},
           ({"at_ms": to_ms(e.at), "op": e.op, "match": list(e.match), "target": list(e.target),
             "reason": e.reason} for e in sim.switch.trace))
    serves = sorted((r for rt in sim.runtimes.values() for r in rt.serve_log), key=lambda r: (r.arrival, r.request_id))
    _jsonl(paths["serves"], {"schema": "fogdomain.serves/1", **header},
           ({"request_id": r.request_id, "container_id": r.container_id, "host": r.host, "state": r.state,
             "arrival_ms": to_ms(r.arrival), "response_ms": to_ms(r.response_at)} for r in serves))
    paths["episodes"].write_text(json.dumps({"schema": "fogdomain.episodes/1", **header,
                                             "episodes": result.episodes}, sort_keys=True, indent=2) + "\n")
    paths["metadata"].write_text(json.dumps({"schema": "fogdomain.metadata/1", **result.metadata},
                                            sort_keys=True, indent=2) + "\n")
    return paths
