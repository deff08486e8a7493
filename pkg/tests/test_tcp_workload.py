from fogdomain.netsim import LinkModel, Scheduler, ms
from fogdomain.runtime import ConnectionMode, ContainerRuntime, ImageProfile
from fogdomain.sdn import BackendEndpoint, SdnController, SwitchModel
from fogdomain.tcp import ClientConfig, ConnState, DataPlane, TcpClient
from fogdomain.workload import RequestGenerator

VIP = ("170.100.8.33", 80, "TCP")
WEB = ImageProfile("web", 0, 2, ConnectionMode.PER_REQUEST, port=8080)
DB = ImageProfile("db", 0, 4, ConnectionMode.PERSISTENT_STREAM, port=5432)


def _domain(active=True, profile=WEB):
    s = Scheduler()
    ctl = SdnController(SwitchModel(), clock=lambda: s.now)
    vs_id = ctl.register_virtual_service(*VIP)
    rt = ContainerRuntime(s, "node1")
    if active:
        rt.create_container("c", profile)
        ctl.upsert_backend(vs_id, BackendEndpoint("192.168.0.11", profile.port))
        ctl.set_active(vs_id, True)
    dp = DataPlane(s, LinkModel("data", ms(2)), ctl, {"192.168.0.11": rt})
    return s, ctl, vs_id, rt, TcpClient(s, dp)


def _connect(s, client, five_tuple):
    out = {}
    client.open_connection(five_tuple, lambda c: out.setdefault("ok", c), lambda c: out.setdefault("fail", c))
    s.run()
    return out


def test_connect_time_miss_then_hit():
    s, ctl, vs_id, rt, client = _domain()
    t = client.new_tuple(*VIP)
    first = _connect(s, client, t)["ok"]
    assert first.connect_time == ms(10)
    again = client.open_connection(t, lambda c: None, lambda c: None)
    s.run()
    assert again.connect_time == ms(4)
    assert ctl.switch.installs == 1


def test_syn_retries_then_error_at_three_timeouts():
    s, ctl, vs_id, rt, client = _domain(active=False)
    out = _connect(s, client, client.new_tuple(*VIP))
    conn = out["fail"]
    assert conn.attempts == 3 and conn.ended_at == ms(900) and conn.failure == "syn-timeout"


def test_activation_between_retries_connects_on_a_later_attempt():
    s, ctl, vs_id, rt, client = _domain(active=False)
    rt.create_container("c", WEB)
    ctl.upsert_backend(vs_id, BackendEndpoint("192.168.0.11", 8080))
    s.schedule(ms(450), ctl.set_active, vs_id, True)
    out = _connect(s, client, client.new_tuple(*VIP))
    assert out["ok"].connect_time == ms(610)


def test_generator_per_request_latency_and_unique_ports():
    s, ctl, vs_id, rt, client = _domain()
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PER_REQUEST, interval=ms(1000), count=5)
    gen.start()
    s.run()
    samples = gen.ordered_samples()
    assert [x.latency_time for x in samples] == [16.0] * 5
    assert [x.connect_time for x in samples] == [10.0] * 5
    assert len({x.five_tuple for x in samples}) == 5
    assert gen.finished()


def test_generator_zero_requests():
    s, ctl, vs_id, rt, client = _domain()
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PER_REQUEST, interval=ms(1000), count=0)
    gen.start()
    s.run()
    assert gen.ordered_samples() == []


def test_stream_reuses_one_connection_and_reconnects_after_rto():
    s, ctl, vs_id, rt, client = _domain(profile=DB)
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PERSISTENT_STREAM, interval=ms(1000), count=6,
                           start=ms(2000))
    gen.start()
    rt2 = ContainerRuntime(s, "node2")
    client.dataplane.hosts["192.168.0.12"] = rt2

    def migrate():
        rt2.create_container("c", DB)
        ctl.upsert_backend(vs_id, BackendEndpoint("192.168.0.12", 5432))
        ctl.remove_backend(vs_id, "192.168.0.11")
        rt.stop_container("c")

    s.schedule(ms(4500), migrate)
    s.run()
    lat = [x.latency_time for x in gen.ordered_samples()]
    assert lat == [8.0, 8.0, 8.0, 218.0, 8.0, 8.0]
    assert ctl.switch.installs == 2
    assert gen.ordered_samples()[3].reconnected


def test_reset_in_flight_is_an_error():
    s, ctl, vs_id, rt, client = _domain(profile=ImageProfile("slow", 0, 500, port=8080))
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PER_REQUEST, interval=ms(1000), count=1)
    gen.start()
    s.schedule(ms(100), rt.stop_container, "c")
    s.run()
    sample = gen.ordered_samples()[0]
    assert sample.outcome == "Error" and sample.latency_time == 102.0


def test_lost_data_packet_times_out():
    s, ctl, vs_id, rt, client = _domain()
    cfg = client.config
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PER_REQUEST, interval=ms(1000), count=1)
    gen.start()
    s.schedule(ms(11), ctl.remove_backend, vs_id, "192.168.0.11")
    s.run()
    sample = gen.ordered_samples()[0]
    assert sample.outcome == "Error" and sample.latency_time == 10 + cfg.response_timeout_ms


def test_drift_stretches_send_times():
    s, ctl, vs_id, rt, client = _domain()
    gen = RequestGenerator(s, client, *VIP, ConnectionMode.PER_REQUEST, interval=ms(1000), count=3,
                           drift_ppm=100)
    assert gen.send_time(1000) == 1000 * ms(1000) + ms(100)
