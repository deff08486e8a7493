import random

import pytest

from fogdomain.contracts import DomainContracts
from fogdomain.ledger import ContractCall, Ledger, UnknownContract, UnregisteredSender
from fogdomain.netsim import LinkModel, Scheduler, SchedulingInPast, make_links, ms


def test_scheduler_orders_by_time_then_priority_then_fifo():
    s = Scheduler()
    fired = []
    s.schedule(10, fired.append, "late", priority=1)
    s.schedule(10, fired.append, "a")
    s.schedule(5, fired.append, "first")
    s.schedule(10, fired.append, "b")
    s.run()
    assert fired == ["first", "a", "b", "late"]


def test_cancelled_events_do_not_fire():
    s = Scheduler()
    fired = []
    ev = s.schedule(3, fired.append, 1)
    ev.cancel()
    s.run()
    assert fired == [] and s.fired == 0


def test_run_until_advances_clock_and_stops():
    s = Scheduler()
    fired = []
    s.schedule(100, fired.append, 1)
    s.run(until=50)
    assert s.now == 50 and fired == []
    with pytest.raises(SchedulingInPast):
        s.schedule(10, fired.append, 2)


def test_links_are_seeded_per_name():
    a = make_links(7, jitter_ms=1)
    b = make_links(7, jitter_ms=1)
    assert [a["data"].delay() for _ in range(20)] == [b["data"].delay() for _ in range(20)]
    assert make_links(1)["data"].delay() == ms(2)


def test_link_rejects_negative_delay():
    with pytest.raises(ValueError):
        LinkModel("x", -1)


def _ledger(interval=1000.0, jitter=0.0):
    s = Scheduler()
    ledger = Ledger(s, DomainContracts(), block_interval_ms=interval, notification_jitter_ms=jitter)
    return s, ledger


def _register(ledger, n, now=0):
    for i in range(1, n + 1):
        ledger.submit_transaction(f"node{i}", ContractCall("DDR", "register_node", {"data_ip": f"10.0.0.{i}"}), now=now)


def test_block_orders_by_time_then_natural_sender():
    s, ledger = _ledger()
    _register(ledger, 10)
    block = ledger.produce_block(0)
    assert [tx.sender for tx in block.txs] == [f"node{i}" for i in range(1, 11)]


def test_tx_at_boundary_is_in_that_block():
    s, ledger = _ledger()
    ledger.start()
    _register(ledger, 1)
    s.run(until=ms(999))
    ledger.submit_transaction("node1", ContractCall("DDR", "register_node", {"data_ip": "x"}), now=ms(1000))
    s.run(until=ms(1000))
    assert [len(b.txs) for b in ledger.blocks] == [1, 1]
    assert ledger.blocks[1].rejected[0].error == "AlreadyRegistered"


def test_block_time_must_be_on_grid_and_increase():
    s, ledger = _ledger()
    with pytest.raises(ValueError):
        ledger.produce_block(ms(500))
    ledger.produce_block(ms(1000))
    with pytest.raises(ValueError):
        ledger.produce_block(ms(1000))


def test_unknown_contract_and_unregistered_sender():
    s, ledger = _ledger()
    with pytest.raises(UnknownContract):
        ledger.submit_transaction("node1", ContractCall("XYZ", "m"))
    with pytest.raises(UnregisteredSender):
        ledger.submit_transaction("node1", ContractCall("DEL", "new_event"))


def test_receipts_and_logs_delivered_after_notification_delay():
    s, ledger = _ledger()
    _register(ledger, 3)
    got, receipts = [], []
    ledger.subscribe_logs("obs", lambda log: got.append((s.now, log.log_kind)))
    ledger.start()
    s.run(until=0)
    spec = {"service_id": "svc", "vip": "1.2.3.4", "port": 80, "proto": "TCP",
            "containers": [{"container_id": "c", "image_profile_name": "nginx", "exposed_port": 80}]}
    ledger.submit_transaction("node1", ContractCall("DCR", "register_service", {"spec": spec}),
                              on_receipt=receipts.append)
    s.run(until=ms(1100))
    assert got == [(ms(1005), "ServiceRegistered"), (ms(1005), "ContainerRegistered")]
    assert receipts[0].ok and receipts[0].block_height == 1


def test_jitter_keeps_per_subscriber_order():
    s, ledger = _ledger(jitter=4.0)
    _register(ledger, 3)
    ledger.produce_block(0)
    spec = {"service_id": "svc", "vip": "1.2.3.4", "port": 80, "proto": "TCP",
            "containers": [{"container_id": f"c{i}", "image_profile_name": "nginx", "exposed_port": 80}
                           for i in range(30)]}
    seen = []
    ledger.subscribe_logs("obs", lambda log: seen.append(log.index))
    ledger.submit_transaction("node1", ContractCall("DCR", "register_service", {"spec": spec}), now=ms(1))
    ledger.produce_block(ms(1000))
    s.run()
    assert seen == sorted(seen) and len(seen) == 31
