import pytest

from fogdomain.netsim import LinkModel, Scheduler, ms
from fogdomain.runtime import (
    ContainerRuntime, ContainerState, DuplicateContainer, HealthCheckConfig, ImageProfile, UnknownContainer,
)
from fogdomain.sdn import (
    BackendEndpoint, EndpointInUse, FiveTuple, SdnController, SwitchModel, UnknownBackend, VirtualServicesInterface,
    vs_key,
)

VIP = ("170.100.8.33", 80, "TCP")


def _tuple(port):
    return FiveTuple("192.168.0.50", port, *VIP)


def _controller(gating=True, idle=None):
    ctl = SdnController(SwitchModel(idle_timeout=idle), health_gating=gating)
    vs_id = ctl.register_virtual_service(*VIP)
    ctl.set_active(vs_id, True)
    return ctl, vs_id


def test_vs_key_and_duplicate_registration():
    ctl, vs_id = _controller()
    assert vs_id == "vs:170.100.8.33:80/TCP"
    with pytest.raises(EndpointInUse):
        ctl.register_virtual_service(*VIP)


def test_round_robin_over_healthy_backends():
    ctl, vs_id = _controller()
    for ip in ("10.0.0.1", "10.0.0.2", "10.0.0.3"):
        ctl.upsert_backend(vs_id, BackendEndpoint(ip, 8080, healthy=ip != "10.0.0.3"))
    picks = []
    for port in range(6):
        rule = ctl.packet_in(_tuple(port), 0)
        picks.append(rule.target[0])
    assert picks == ["10.0.0.1", "10.0.0.2"] * 3


def test_without_gating_unhealthy_backends_are_eligible():
    ctl, vs_id = _controller(gating=False)
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080, healthy=False))
    assert ctl.packet_in(_tuple(1), 0).target == ("10.0.0.1", 8080)


def test_packet_in_rule_lands_after_controller_round_trip():
    ctl, vs_id = _controller()
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    rule = ctl.packet_in(_tuple(1), ms(1))
    assert rule.installed_at == ms(7)
    assert ctl.switch.lookup(_tuple(1), ms(7)) is None
    ctl.commit(rule, ms(7))
    assert ctl.switch.lookup(_tuple(1), ms(8)).target == ("10.0.0.1", 8080)
    assert ctl.switch.installs == 1


def test_inactive_or_empty_service_drops():
    ctl, vs_id = _controller()
    assert ctl.packet_in(_tuple(1), 0) is None
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    ctl.set_active(vs_id, False)
    assert ctl.packet_in(_tuple(2), 0) is None
    assert ctl.drops == 2


def test_remove_backend_deletes_rules_and_cancels_pending():
    ctl, vs_id = _controller()
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.2", 8080))
    installed = ctl.packet_in(_tuple(1), 0)
    ctl.commit(installed, installed.installed_at)
    pending = ctl.packet_in(_tuple(2), 0)
    assert installed.target[0] == "10.0.0.1" and pending.target[0] == "10.0.0.2"
    ctl.remove_backend(vs_id, "10.0.0.1")
    ctl.remove_backend(vs_id, "10.0.0.2")
    assert ctl.switch.flow_table == {}
    assert ctl.commit(pending, pending.installed_at) is None
    with pytest.raises(UnknownBackend):
        ctl.remove_backend(vs_id, "10.0.0.9")


def test_drain_keeps_established_rules_until_purge():
    ctl, vs_id = _controller()
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    rule = ctl.packet_in(_tuple(1), 0)
    ctl.commit(rule, rule.installed_at)
    ctl.remove_backend(vs_id, "10.0.0.1", keep_flows=True)
    assert _tuple(1) in ctl.switch.flow_table
    assert ctl.purge_flows(vs_id, "10.0.0.1", 8080) == 1


def test_standby_promoted_when_last_primary_leaves():
    ctl, vs_id = _controller()
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.2", 8080, standby=True))
    assert ctl.packet_in(_tuple(1), 0).target[0] == "10.0.0.1"
    ctl.remove_backend(vs_id, "10.0.0.1")
    assert ctl.packet_in(_tuple(2), 0).target[0] == "10.0.0.2"


def test_idle_timeout_expires_rules():
    ctl, vs_id = _controller(idle=ms(100))
    ctl.upsert_backend(vs_id, BackendEndpoint("10.0.0.1", 8080))
    rule = ctl.packet_in(_tuple(1), 0)
    ctl.commit(rule, rule.installed_at)
    assert ctl.switch.lookup(_tuple(1), rule.installed_at + ms(100)) is not None
    assert ctl.switch.lookup(_tuple(1), rule.installed_at + ms(201)) is None


def test_virtual_services_interface_round_trip():
    s = Scheduler()
    ctl = SdnController(clock=lambda: s.now)
    vsi = VirtualServicesInterface(s, ctl, LinkModel("control", ms(2)))
    replies = []
    vsi.call("register", lambda r, e: replies.append((s.now, r, e)), vip=VIP[0], port=VIP[1], proto=VIP[2])
    vsi.call("remove_backend", lambda r, e: replies.append((s.now, r, type(e).__name__)),
             vs_id=vs_key(*VIP), node_ip="1.1.1.1")
    s.run()
    assert replies[0] == (ms(4), vs_key(*VIP), None)
    assert replies[1][2] == "UnknownBackend"
    with pytest.raises(ValueError):
        vsi.call("reboot")


PROFILE = ImageProfile("web", startup_time_ms=800, processing_ms=5)


def test_probe_schedule_reaches_healthy_after_required_passes():
    s = Scheduler()
    rt = ContainerRuntime(s, "node1", HealthCheckConfig(probe_interval_ms=500, consecutive_passes_required=2))
    events = []
    rt.listeners.append(lambda kind, inst: events.append((s.now, kind)))
    inst = rt.create_container("c", PROFILE)
    s.run(until=ms(3000))
    assert events == [(0, "running"), (ms(1500), "healthy")]
    assert inst.state == ContainerState.HEALTHY


def test_requests_queue_until_initialized():
    s = Scheduler()
    rt = ContainerRuntime(s, "node1")
    inst = rt.create_container("c", PROFILE)
    assert rt.serve_request(inst, ms(100)) == ms(805)
    assert rt.serve_request(inst, ms(900)) == ms(905)


def test_stop_resets_in_flight_and_is_idempotent():
    s = Scheduler()
    rt = ContainerRuntime(s, "node1")
    rt.create_container("c", PROFILE)
    resets, responses = [], []
    rt.accept(8080, 1, lambda t, i: responses.append(t), resets.append)
    s.run(until=ms(10))
    rt.stop_container("c")
    rt.stop_container("c")
    s.run()
    assert resets == [ms(10)] and responses == []
    assert rt.accept(8080, 2, None, None) is None


def test_duplicate_and_unknown_containers():
    s = Scheduler()
    rt = ContainerRuntime(s, "node1")
    rt.create_container("c", PROFILE)
    with pytest.raises(DuplicateContainer):
        rt.create_container("c", PROFILE)
    with pytest.raises(UnknownContainer):
        rt.stop_container("nope")
    rt.stop_container("c")
    rt.create_container("c", PROFILE)
    assert rt.running_count == 1
    assert rt.free_fractions() == (0.9, 0.9)
