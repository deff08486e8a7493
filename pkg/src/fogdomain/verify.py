"""Invariant checks over a finished run.

The protocol checks replay the ledger's transaction stream and recount
replies and votes independently of the contract code; the data-plane checks
scan the flow, serve and sample traces.
"""

from __future__ import annotations

import dataclasses
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .scenario import ConfigError, ScenarioConfig, load_scenario
from .simulation import RunResult, run_scenario

SHORT_RUN_S = 600.0


@dataclass
class PropertyResult:
    name: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def fail(self, detail: str) -> None:
        self.failures.append(detail)


@dataclass
class VerificationReport:
    properties: list[PropertyResult] = field(default_factory=list)
    unsatisfiable: list[str] = field(default_factory=list)
    stuck: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unsatisfiable and not self.stuck and all(p.passed for p in self.properties)

    @property
    def exit_code(self) -> int:
        if self.unsatisfiable:
            return 1
        if any(not p.passed for p in self.properties):
            return 2
        if self.stuck:
            return 3
        return 0

    def get(self, name: str) -> PropertyResult:
        for p in self.properties:
            if p.name == name:
                return p
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = [f"unsatisfiable config: {why}" for why in self.unsatisfiable]
        for p in self.properties:
            status = "PASS" if p.passed else "FAIL"
            out.append(f"{status} {p.name} ({p.checked} checked)")
            out.extend(f"    {detail}" for detail in p.failures[:10])
        if self.stuck:
            out.append(f"STUCK {len(self.stuck)} episode(s): {', '.join(self.stuck[:10])}")
        return out


def check_config(config: ScenarioConfig) -> list[str]:
    """Quorum settings no cluster of this size can ever meet."""
    n = config.cluster_size
    problems = []
    votes = config.contracts.vote_threshold
    replies = config.contracts.reply_threshold
    if votes is not None and votes > n:
        problems.append(f"vote_threshold {votes} > cluster size {n}")
    if votes is not None and votes < 1:
        problems.append(f"vote_threshold {votes} < 1 never elects a solver")
    if replies is not None and replies > n - 1:
        problems.append(f"reply_threshold {replies} > {n - 1} eligible repliers")
    return problems


def _node_number(node_id: str) -> tuple:
    m = re.search(r"(\d+)$", node_id)
    return (int(m.group(1)) if m else -1, node_id)


def brute_force_winner(votes: dict[str, str], nodes: list[str]) -> str:
    best, winner = -1, None
    for candidate in sorted(nodes, key=_node_number):
        count = sum(1 for v in votes.values() if v == candidate)
        if count > best:
            best, winner = count, candidate
    return winner


def _thresholds(config: ScenarioConfig, n: int) -> tuple[int, int]:
    c = config.contracts
    return (c.reply_threshold if c.reply_threshold is not None else n - 1,
            c.vote_threshold if c.vote_threshold is not None else n)


def check_protocol(result: RunResult) -> list[PropertyResult]:
    sim = result.sim
    ledger = sim.ledger
    delay = ledger.notification_delay
    quorum = PropertyResult("quorum_gating")
    election = PropertyResult("election_oracle")
    solver_only = PropertyResult("solver_only_solve")
    single = PropertyResult("single_episode")
    order = PropertyResult("log_order_precedence")

    registered: list[str] = []
    threshold: dict[str, tuple[int, int]] = {}
    replies: dict[str, set] = defaultdict(set)
    votes: dict[str, dict] = defaultdict(dict)
    emitted: dict[tuple[str, str], int] = {}
    position: dict[tuple[str, str], tuple[int, int]] = {}
    elected: dict[str, str] = {}
    open_for: dict[str, str] = {}

    for block in ledger.blocks:
        rejected = {r.tx_id for r in block.rejected}
        logs_by_tx = defaultdict(list)
        for lg in block.logs:
            logs_by_tx[lg.tx_id].append(lg)
        for tx in block.txs:
            call = tx.payload
            name = f"{call.contract}.{call.method}"
            ok = tx.tx_id not in rejected
            kinds = {lg.log_kind: lg for lg in logs_by_tx[tx.tx_id]}
            for lg in logs_by_tx[tx.tx_id]:
                eid = lg.payload.get("event_id")
                if eid is not None:
                    emitted[(eid, lg.log_kind)] = lg.emitted_at
                    position[(eid, lg.log_kind)] = (lg.block_height, lg.index)
            if name == "DDR.register_node" and ok:
                registered.append(call.args.get("node_id") or tx.sender)
            elif name == "DEL.new_event" and ok:
                new = kinds["NewEvent"].payload
                eid, cid = new["event_id"], new["container_id"]
                threshold[eid] = _thresholds(result.config, len(registered))
                single.checked += 1
                if cid in open_for:
                    single.fail(f"{eid} opened while {open_for[cid]} is open for {cid}")
                open_for[cid] = eid
            elif name == "DEL.send_reply" and ok:
                eid = call.args["event_id"]
                replies[eid].add(tx.sender)
                quorum.checked += 1
                need = threshold[eid][0]
                fired = "RequiredReplies" in kinds
                if fired != (len(replies[eid]) == need):
                    quorum.fail(f"{eid}: RequiredReplies={fired} after {len(replies[eid])}/{need} replies")
                if tx.submitted_at < emitted[(eid, "NewEvent")] + delay:
                    order.fail(f"{eid}: reply from {tx.sender} before NewEvent was delivered")
                order.checked += 1
            elif name == "DEL.send_vote" and ok:
                eid = call.args["event_id"]
                votes[eid][tx.sender] = call.args["candidate"]
                quorum.checked += 1
                need = threshold[eid][1]
                if len(replies[eid]) < threshold[eid][0]:
                    quorum.fail(f"{eid}: vote accepted before reply quorum")
                fired = "RequiredVotes" in kinds
                if fired != (len(votes[eid]) == need):
                    quorum.fail(f"{eid}: RequiredVotes={fired} after {len(votes[eid])}/{need} votes")
                if fired:
                    election.checked += 1
                    expected = brute_force_winner(votes[eid], registered)
                    got = kinds["RequiredVotes"].payload["elected_solver"]
                    elected[eid] = got
                    if got != expected:
                        election.fail(f"{eid}: elected {got}, oracle says {expected}")
                if tx.submitted_at < emitted[(eid, "RequiredReplies")] + delay:
                    order.fail(f"{eid}: vote from {tx.sender} before RequiredReplies was delivered")
                order.checked += 1
            elif name == "DEL.solve_event":
                eid = call.args.get("event_id")
                if ok:
                    solver_only.checked += 1
                    if elected.get(eid) != tx.sender:
                        solver_only.fail(f"{eid}: solved by {tx.sender}, elected {elected.get(eid)}")
                    if tx.submitted_at < emitted[(eid, "RequiredVotes")] + delay:
                        order.fail(f"{eid}: solve before RequiredVotes was delivered")
                    order.checked += 1
                    cid = kinds["EventSolved"].payload["container_id"]
                    if open_for.get(cid) == eid:
                        del open_for[cid]
                elif eid in elected and elected[eid] != tx.sender:
                    solver_only.checked += 1

    sequence = ("NewEvent", "RequiredReplies", "RequiredVotes", "EventSolved")
    for eid in threshold:
        seen = [position[(eid, k)] for k in sequence if (eid, k) in position]
        order.checked += 1
        if seen != sorted(seen) or len(set(seen)) != len(seen):
            order.fail(f"{eid}: logs out of order {seen}")
        present = [(eid, k) in position for k in sequence]
        if present != sorted(present, reverse=True):
            order.fail(f"{eid}: phase skipped {present}")
    for node, agent in sim.agents.items():
        order.checked += 1
        if agent.received != sorted(agent.received):
            order.fail(f"{node}: logs delivered out of ledger order")
    return [quorum, election, solver_only, single, order]


def check_flows(result: RunResult) -> PropertyResult:
    sim = result.sim
    prop = PropertyResult("flow_count_oracle")
    misses = [t for (_, t, _, miss) in sim.dataplane.admitted if miss]
    trace_installs = [e for e in sim.switch.trace if e.op == "install"]
    prop.checked = len(misses)
    if sim.switch.installs != len(misses):
        prop.fail(f"switch counted {sim.switch.installs} installs, {len(misses)} admissions needed one")
    if len(trace_installs) != sim.switch.installs:
        prop.fail(f"trace shows {len(trace_installs)} installs, switch counted {sim.switch.installs}")
    live: set = set()
    for e in sim.switch.trace:
        if e.op == "install":
            if e.match in live:
                prop.fail(f"{e.match} installed twice without a delete")
            live.add(e.match)
        elif e.op == "delete":
            live.discard(e.match)
    return prop


def check_health_gating(result: RunResult) -> PropertyResult:
    prop = PropertyResult("health_gating")
    for rt in result.sim.runtimes.values():
        for rec in rt.serve_log:
            prop.checked += 1
            if result.config.H and rec.state != "HEALTHY":
                prop.fail(f"request {rec.request_id} reached {rec.container_id}@{rec.host} while {rec.state}")
    return prop


def check_orphans(result: RunResult) -> PropertyResult:
    sim = result.sim
    prop = PropertyResult("zero_orphan")
    for violation in sim.orphan_violations:
        prop.fail(violation)
    prop.checked = sum(1 for e in result.episodes if e["event_type"] == "Migrate")
    for cid, record in sim.contracts.containers.items():
        if record.current_host is None:
            continue
        prop.checked += 1
        live = [node for node, rt in sim.runtimes.items()
                if cid in rt.containers and rt.containers[cid].state.name != "STOPPED"]
        if live != [record.current_host]:
            prop.fail(f"{cid}: chain says {record.current_host}, live on {live}")
    return prop


def check_samples(result: RunResult) -> PropertyResult:
    prop = PropertyResult("sample_conservation")
    samples = result.samples
    expected = result.config.request_count
    prop.checked = len(samples)
    if len(samples) != expected:
        prop.fail(f"{len(samples)} samples for {expected} requests")
    if [s.request_id for s in samples] != list(range(len(samples))):
        prop.fail("request ids are not 0..n-1")
    outcomes = sum(1 for s in samples if s.outcome in ("Success", "Error"))
    if outcomes != len(samples):
        prop.fail("unknown outcome values")
    for s in samples:
        if s.connect_time > s.latency_time + 1e-9:
            prop.fail(f"request {s.request_id}: connect {s.connect_time} > latency {s.latency_time}")
        if s.outcome == "Success" and s.serving_backend is None:
            prop.fail(f"request {s.request_id}: success without a serving backend")
    return prop


def check_run(result: RunResult) -> VerificationReport:
    report = VerificationReport()
    report.properties.extend(check_protocol(result))
    report.properties.append(check_flows(result))
    report.properties.append(check_health_gating(result))
    report.properties.append(check_orphans(result))
    report.properties.append(check_samples(result))
    stuck = set(result.stuck_episodes)
    for agent in result.sim.agents.values():
        stuck.update(agent.stuck)
    report.stuck = sorted(stuck)
    return report


def verify(scenario: Union[str, Path, ScenarioConfig], max_duration_s: Optional[float] = SHORT_RUN_S
           ) -> VerificationReport:
    """Run a (possibly shortened) scenario and check every property."""
    config = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    problems = check_config(config)
    if problems:
        return VerificationReport(unsatisfiable=problems)
    if max_duration_s is not None and config.duration_s > max_duration_s:
        config = dataclasses.replace(config, duration_s=max_duration_s)
    try:
        config.validate()
    except ConfigError as exc:
        return VerificationReport(unsatisfiable=[str(exc)])
    return check_run(run_scenario(config))
