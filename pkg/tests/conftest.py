import pytest

from fogdomain.contracts import ContainerSpec, ContractConfig, DomainContracts, ServiceSpec


def make_cluster(n=3, config=None, containers=("c1",)):
    chain = DomainContracts(config or ContractConfig())
    for i in range(1, n + 1):
        chain.execute("DDR", "register_node", f"node{i}", {"data_ip": f"192.168.0.{10 + i}"}, now=0)
    spec = ServiceSpec("svc", "170.100.8.33", 80, "TCP", [ContainerSpec(c, "nginx", 8080) for c in containers])
    chain.execute("DCR", "register_service", "node1", {"spec": spec.to_args()}, now=0)
    return chain


def report(free=0.5):
    return {"free_cpu_fraction": free, "free_mem_fraction": free, "running_containers": 0}


def open_event(chain, creator="node1", container="c1", event_type="Deploy", reason="scripted"):
    logs = chain.execute("DEL", "new_event", creator,
                         {"event_type": event_type, "container_id": container, "reason": reason}, now=1)
    return logs[0][1]["event_id"]


def run_to_election(chain, event_id, votes):
    """Replies from every non-creator, then the given {voter: candidate} votes."""
    ev = chain.events[event_id]
    for node in chain.node_ids():
        if node != ev.applicant_or_owner:
            chain.execute("DEL", "send_reply", node, {"event_id": event_id, "report": report()}, now=2)
    logs = []
    for voter, candidate in votes.items():
        logs += chain.execute("DEL", "send_vote", voter, {"event_id": event_id, "candidate": candidate}, now=3)
    return logs


@pytest.fixture
def cluster():
    return make_cluster()
