import itertools

import pytest

from conftest import make_cluster, open_event, report, run_to_election
from fogdomain.contracts import (
    ConcurrentEventForContainer, ContractConfig, CreatorCannotReply, DuplicateReply, DuplicateServiceId,
    DuplicateVote, InvalidCandidate, NotCurrentHost, NotElectedSolver, Phase, UnregisteredSender,
    WrongPhase, elect, node_sort_key,
)


def test_natural_node_order():
    assert sorted(["node10", "node2", "node1"], key=node_sort_key) == ["node1", "node2", "node10"]


def test_register_service_emits_service_then_containers():
    chain = make_cluster(containers=("a", "b"))
    assert set(chain.containers) == {"a", "b"}
    assert chain.services["svc"].owner == "node1"


def test_duplicate_service_rejected(cluster):
    from fogdomain.contracts import ServiceSpec
    with pytest.raises(DuplicateServiceId):
        cluster.execute("DCR", "register_service", "node2",
                        {"spec": ServiceSpec("svc", "1.1.1.1", 80, "TCP", []).to_args()}, now=5)


def test_unregistered_sender_rejected(cluster):
    with pytest.raises(UnregisteredSender):
        open_event(cluster, creator="node9")


def test_reply_threshold_gates_required_replies(cluster):
    eid = open_event(cluster)
    assert cluster.events[eid].reply_threshold == 2
    first = cluster.execute("DEL", "send_reply", "node2", {"event_id": eid, "report": report()}, now=2)
    assert first == []
    second = cluster.execute("DEL", "send_reply", "node3", {"event_id": eid, "report": report()}, now=2)
    assert [k for k, _ in second] == ["RequiredReplies"]
    assert cluster.events[eid].phase == Phase.REPLIES_COLLECTED


@pytest.mark.parametrize("order", list(itertools.permutations(["node2", "node3"])))
def test_every_reply_order_fires_once(order):
    chain = make_cluster()
    eid = open_event(chain)
    fired = [bool(chain.execute("DEL", "send_reply", n, {"event_id": eid, "report": report()}, now=2))
             for n in order]
    assert fired == [False, True]


def test_creator_cannot_reply_and_no_duplicates(cluster):
    eid = open_event(cluster)
    with pytest.raises(CreatorCannotReply):
        cluster.execute("DEL", "send_reply", "node1", {"event_id": eid, "report": report()}, now=2)
    cluster.execute("DEL", "send_reply", "node2", {"event_id": eid, "report": report()}, now=2)
    with pytest.raises(DuplicateReply):
        cluster.execute("DEL", "send_reply", "node2", {"event_id": eid, "report": report()}, now=2)


def test_vote_before_replies_is_wrong_phase(cluster):
    eid = open_event(cluster)
    with pytest.raises(WrongPhase):
        cluster.execute("DEL", "send_vote", "node2", {"event_id": eid, "candidate": "node2"}, now=2)


def test_vote_threshold_and_election(cluster):
    eid = open_event(cluster)
    logs = run_to_election(cluster, eid, {"node1": "node3", "node2": "node3"})
    assert logs == []
    logs = cluster.execute("DEL", "send_vote", "node3", {"event_id": eid, "candidate": "node2"}, now=3)
    assert logs[0][0] == "RequiredVotes"
    assert logs[0][1]["elected_solver"] == "node3"


def test_duplicate_vote_rejected(cluster):
    eid = open_event(cluster)
    run_to_election(cluster, eid, {"node1": "node2"})
    with pytest.raises(DuplicateVote):
        cluster.execute("DEL", "send_vote", "node1", {"event_id": eid, "candidate": "node3"}, now=3)


def test_three_way_tie_goes_to_lowest_id():
    assert elect(["node3", "node2", "node1"]) == "node1"
    assert elect(["node10", "node9"]) == "node9"
    assert elect(["node2", "node3", "node3"]) == "node3"


def test_only_elected_solver_may_solve(cluster):
    eid = open_event(cluster)
    run_to_election(cluster, eid, {"node1": "node2", "node2": "node2", "node3": "node2"})
    with pytest.raises(NotElectedSolver):
        cluster.execute("DEL", "solve_event", "node3", {"event_id": eid}, now=4)
    logs = cluster.execute("DEL", "solve_event", "node2", {"event_id": eid}, now=4)
    kinds = [k for k, _ in logs]
    assert kinds[0] == "EventSolved"
    assert cluster.containers["c1"].current_host == "node2"
    assert cluster.reputation["node2"] == 1
    assert cluster.idr_records[-1]["host"] == "node2"
    with pytest.raises(WrongPhase):
        cluster.execute("DEL", "solve_event", "node2", {"event_id": eid}, now=5)


def _deploy(chain, host="node2"):
    eid = open_event(chain)
    run_to_election(chain, eid, {n: host for n in chain.node_ids()})
    chain.execute("DEL", "solve_event", host, {"event_id": eid}, now=4)


def test_migrate_requires_current_host(cluster):
    _deploy(cluster)
    with pytest.raises(NotCurrentHost):
        open_event(cluster, creator="node3", event_type="Migrate")
    eid = open_event(cluster, creator="node2", event_type="Migrate")
    assert cluster.events[eid].applicant_or_owner == "node2"


def test_one_open_event_per_container(cluster):
    open_event(cluster)
    with pytest.raises(ConcurrentEventForContainer):
        open_event(cluster, creator="node2")


def test_applicant_is_not_a_candidate(cluster):
    _deploy(cluster)
    eid = open_event(cluster, creator="node2", event_type="Migrate")
    for node in ("node1", "node3"):
        cluster.execute("DEL", "send_reply", node, {"event_id": eid, "report": report()}, now=2)
    with pytest.raises(InvalidCandidate):
        cluster.execute("DEL", "send_vote", "node1", {"event_id": eid, "candidate": "node2"}, now=3)


def test_resource_exhaustion_penalizes_applicant(cluster):
    _deploy(cluster)
    eid = open_event(cluster, creator="node2", event_type="Migrate", reason="resource_exhaustion")
    run_to_election(cluster, eid, {n: "node3" for n in cluster.node_ids()})
    cluster.execute("DEL", "solve_event", "node3", {"event_id": eid}, now=4)
    assert cluster.reputation == {"node1": 0, "node2": 0, "node3": 1}


def test_custom_thresholds_fixed_at_creation():
    chain = make_cluster(config=ContractConfig(reply_threshold=1, vote_threshold=2))
    eid = open_event(chain)
    assert chain.execute("DEL", "send_reply", "node2", {"event_id": eid, "report": report()}, now=2)
    chain.execute("DDR", "register_node", "node4", {"data_ip": "192.168.0.14"}, now=2)
    assert chain.events[eid].vote_threshold == 2


def test_bad_report_rejected(cluster):
    from fogdomain.contracts import InvalidReport
    eid = open_event(cluster)
    with pytest.raises(InvalidReport):
        cluster.execute("DEL", "send_reply", "node2",
                        {"event_id": eid, "report": {**report(), "free_cpu_fraction": 1.5}}, now=2)
