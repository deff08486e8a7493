"""Abstract TCP client and the data-plane packet path.

The switch sits halfway along the data link between the observer and the
backends. Only connection-opening packets (SYN) are escalated to the
controller on a table miss; any other packet that misses is dropped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .netsim import LinkModel, Scheduler, SimEvent, ms
from .runtime import ContainerInstance, ContainerRuntime
from .sdn import FiveTuple, FlowRule, SdnController


class ConnectionFailed(RuntimeError):
    pass


class ResponseTimeout(RuntimeError):
    pass


class ConnState(str, Enum):
    CONNECTING = "Connecting"
    ESTABLISHED = "Established"
    FAILED = "Failed"
    CLOSED = "Closed"


@dataclass
class ClientConfig:
    src_ip: str = "192.168.0.50"
    syn_timeout_ms: float = 300.0
    max_retries: int = 3
    response_timeout_ms: float = 5000.0
    stream_rto_ms: float = 200.0
    stream_preconnect_ms: float = 1000.0
    ephemeral_ports: tuple[int, int] = (32768, 60999)

    def __post_init__(self):
        if self.max_retries < 1:
            raise ValueError("max_retries counts total attempts and must be >= 1")
        if self.syn_timeout_ms <= 0 or self.response_timeout_ms <= 0:
            raise ValueError("timeouts must be > 0")


@dataclass
class ConnectionAttempt:
    conn_id: int
    five_tuple: FiveTuple
    started_at: int
    syn_timeout: int
    max_retries: int
    state: ConnState = ConnState.CONNECTING
    attempts: int = 0
    established_at: Optional[int] = None
    ended_at: Optional[int] = None
    backend: Optional[tuple[str, int]] = None
    failure: Optional[str] = None
    _timer: Optional[SimEvent] = field(default=None, repr=False)

    @property
    def connect_time(self) -> Optional[int]:
        if self.established_at is None:
            return None
        return self.established_at - self.started_at


class DataPlane:
    """Carries packets between the observer, the switch and the backends."""

    def __init__(self, scheduler: Scheduler, link: LinkModel, controller: SdnController,
                 hosts: dict[str, ContainerRuntime]):
        self.scheduler = scheduler
        self.link = link
        self.controller = controller
        self.switch = controller.switch
        self.hosts = hosts  # data ip -> runtime
        self.admitted: list[tuple[int, FiveTuple, tuple[str, int], bool]] = []
        self.dropped_syns = 0
        self.dropped_data = 0

    def _split(self) -> tuple[int, int]:
        d = self.link.delay()
        return d // 2, d - d // 2

    # -- connection setup ----------------------------------------------------
    def send_syn(self, conn: ConnectionAttempt, on_synack: Callable[[ConnectionAttempt, tuple], None],
                 on_refused: Callable[[ConnectionAttempt], None]) -> None:
        to_switch, onward = self._split()
        self.scheduler.after(to_switch, self._syn_at_switch, conn, onward, on_synack, on_refused)

    def _syn_at_switch(self, conn, onward, on_synack, on_refused) -> None:
        now = self.scheduler.now
        rule = self.switch.lookup(conn.five_tuple, now)
        if rule is not None:
            self.admitted.append((now, conn.five_tuple, rule.target, False))
            self.scheduler.after(onward, self._syn_at_backend, conn, rule.target, on_synack, on_refused)
            return
        self._resolve(conn, onward, on_synack, on_refused)

    def _resolve(self, conn, onward, on_synack, on_refused) -> None:
        rule = self.controller.packet_in(conn.five_tuple, self.scheduler.now)
        if rule is None:
            self.dropped_syns += 1
            return
        if rule.installed_at <= self.scheduler.now:
            # table hit raced in (same tuple resolved twice)
            self.scheduler.after(onward, self._syn_at_backend, conn, rule.target, on_synack, on_refused)
            return
        self.scheduler.schedule(rule.installed_at, self._packet_out, conn, rule, onward, on_synack, on_refused)

    def _packet_out(self, conn, rule: FlowRule, onward, on_synack, on_refused) -> None:
        committed = self.controller.commit(rule, self.scheduler.now)
        if committed is None:
            # target vanished while the rule was in flight: resolve again
            self._resolve(conn, onward, on_synack, on_refused)
            return
        self.admitted.append((self.scheduler.now, conn.five_tuple, committed.target, True))
        self.scheduler.after(onward, self._syn_at_backend, conn, committed.target, on_synack, on_refused)

    def _syn_at_backend(self, conn, target, on_synack, on_refused) -> None:
        runtime = self.hosts.get(target[0])
        back = self.link.delay()
        if runtime is not None and runtime.instance_on_port(target[1]) is not None:
            self.scheduler.after(back, on_synack, conn, target)
        else:
            self.scheduler.after(back, on_refused, conn)

    # -- request/response ----------------------------------------------------
    def send_data(self, conn: ConnectionAttempt, request_id: int,
                  on_ack: Callable[[], None],
                  on_response: Callable[[ContainerInstance], None],
                  on_reset: Callable[[], None]) -> None:
        to_switch, onward = self._split()
        self.scheduler.after(to_switch, self._data_at_switch, conn, request_id, onward,
                             on_ack, on_response, on_reset)

    def _data_at_switch(self, conn, request_id, onward, on_ack, on_response, on_reset) -> None:
        rule = self.switch.lookup(conn.five_tuple, self.scheduler.now)
        if rule is None:
            self.dropped_data += 1
            return
        self.scheduler.after(onward, self._data_at_backend, rule.target, request_id,
                             on_ack, on_response, on_reset)

    def _data_at_backend(self, target, request_id, on_ack, on_response, on_reset) -> None:
        runtime = self.hosts.get(target[0])
        if runtime is None:
            self.scheduler.after(self.link.delay(), on_reset)
            return

        def responded(_at: int, inst: ContainerInstance) -> None:
            self.scheduler.after(self.link.delay(), on_response, inst)

        def reset(_at: int) -> None:
            self.scheduler.after(self.link.delay(), on_reset)

        inst = runtime.accept(target[1], request_id, responded, reset)
        if inst is None:
            self.scheduler.after(self.link.delay(), on_reset)
            return
        self.scheduler.after(self.link.delay(), on_ack)


class TcpClient:
    def __init__(self, scheduler: Scheduler, dataplane: DataPlane, config: Optional[ClientConfig] = None):
        self.scheduler = scheduler
        self.dataplane = dataplane
        self.config = config or ClientConfig()
        self.connections: list[ConnectionAttempt] = []
        self._conn_ids = itertools.count(1)
        lo, hi = self.config.ephemeral_ports
        self._ports = itertools.cycle(range(lo, hi + 1))

    def new_tuple(self, vip: str, port: int, proto: str) -> FiveTuple:
        return FiveTuple(self.config.src_ip, next(self._ports), vip, int(port), proto)

    def open_connection(self, five_tuple: FiveTuple,
                        on_established: Callable[[ConnectionAttempt], None],
                        on_failed: Callable[[ConnectionAttempt], None]) -> ConnectionAttempt:
        conn = ConnectionAttempt(next(self._conn_ids), five_tuple, self.scheduler.now,
                                 ms(self.config.syn_timeout_ms), self.config.max_retries)
        self.connections.append(conn)
        callbacks = (on_established, on_failed)
        self._attempt(conn, callbacks)
        return conn

    def _attempt(self, conn: ConnectionAttempt, callbacks) -> None:
        conn.attempts += 1
        self.dataplane.send_syn(
            conn,
            lambda c, target: self._on_synack(c, target, callbacks),
            lambda c: self._on_refused(c, callbacks),
        )
        deadline = conn.started_at + conn.syn_timeout * conn.attempts
        conn._timer = self.scheduler.schedule(deadline, self._on_syn_timeout, conn, conn.attempts, callbacks)

    def _on_syn_timeout(self, conn: ConnectionAttempt, attempt: int, callbacks) -> None:
        if conn.state != ConnState.CONNECTING or attempt != conn.attempts:
            return
        if conn.attempts < conn.max_retries:
            self._attempt(conn, callbacks)
        else:
            self._fail(conn, "syn-timeout", callbacks)

    def _on_synack(self, conn: ConnectionAttempt, target: tuple, callbacks) -> None:
        if conn.state != ConnState.CONNECTING:
            return
        conn.state = ConnState.ESTABLISHED
        conn.established_at = self.scheduler.now
        conn.backend = target
        if conn._timer is not None:
            conn._timer.cancel()
        callbacks[0](conn)

    def _on_refused(self, conn: ConnectionAttempt, callbacks) -> None:
        if conn.state != ConnState.CONNECTING:
            return
        self._fail(conn, "refused", callbacks)

    def _fail(self, conn: ConnectionAttempt, why: str, callbacks) -> None:
        conn.state = ConnState.FAILED
        conn.failure = why
        conn.ended_at = self.scheduler.now
        if conn._timer is not None:
            conn._timer.cancel()
        callbacks[1](conn)

    def close(self, conn: ConnectionAttempt) -> None:
        if conn.state == ConnState.ESTABLISHED:
            conn.state = ConnState.CLOSED
            conn.ended_at = self.scheduler.now

    def send_request(self, conn: ConnectionAttempt, request_id: int,
                     on_result: Callable[[str, Optional[ContainerInstance]], None],
                     rto_ms: Optional[float] = None) -> None:
        """Send one request on an established connection.

        ``on_result(outcome, instance)`` fires exactly once with outcome one of
        ``ok``, ``reset``, ``timeout`` or ``rto`` (data never acknowledged).
        """
        state = {"done": False, "acked": False}
        timers: list[SimEvent] = []

        def finish(outcome: str, inst: Optional[ContainerInstance] = None) -> None:
            if state["done"]:
                return
            state["done"] = True
            for t in timers:
                t.cancel()
            on_result(outcome, inst)

        def acked() -> None:
            state["acked"] = True

        def rto_expired() -> None:
            if not state["acked"]:
                finish("rto")

        self.dataplane.send_data(conn, request_id, acked, lambda inst: finish("ok", inst),
                                 lambda: finish("reset"))
        timers.append(self.scheduler.after(ms(self.config.response_timeout_ms), finish, "timeout"))
        if rto_ms is not None:
            timers.append(self.scheduler.after(ms(rto_ms), rto_expired))
