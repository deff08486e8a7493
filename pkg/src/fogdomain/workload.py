"""Measurement client: one request every R seconds against a virtual service."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .metrics import RequestSample
from .netsim import Scheduler, ms, to_ms
from .runtime import ConnectionMode, ContainerInstance
from .tcp import ConnectionAttempt, ConnState, TcpClient


@dataclass
class _Waiter:
    request_id: int
    sent_at: int
    connect_from: int
    reconnected: bool = False


class RequestGenerator:
    """Sends ``count`` requests, the k-th at ``start + k * interval``.

    ``drift_ppm`` stretches the client's notion of the interval, which models
    an observer clock that is not synchronized with the domain.
    """

    def __init__(self, scheduler: Scheduler, client: TcpClient, vip: str, port: int, proto: str,
                 mode: ConnectionMode, interval: int, count: int, start: int = 0,
                 drift_ppm: float = 0.0, host_of_ip: Optional[dict] = None):
        if interval <= 0:
            raise ValueError("request interval must be > 0")
        self.scheduler = scheduler
        self.client = client
        self.target = (vip, int(port), proto)
        self.mode = ConnectionMode(mode)
        self.interval = interval
        self.count = count
        self.start_at = start
        self.drift = drift_ppm * 1e-6
        self.host_of_ip = host_of_ip or {}
        self.samples: dict[int, RequestSample] = {}
        self.sent = 0
        self._stream: Optional[ConnectionAttempt] = None
        self._waiters: list[_Waiter] = []

    def send_time(self, k: int) -> int:
        return self.start_at + int(round(k * self.interval * (1.0 + self.drift)))

    def start(self) -> None:
        if self.count <= 0:
            return
        if self.mode == ConnectionMode.PERSISTENT_STREAM:
            # the driver connects before the first query goes out
            lead = ms(self.client.config.stream_preconnect_ms)
            self.scheduler.schedule(max(self.scheduler.now, self.start_at - lead), self._preconnect)
        self.scheduler.schedule(self.send_time(0), self._tick, 0)

    def _preconnect(self) -> None:
        if self._stream is None:
            self._reconnect()

    def _tick(self, k: int) -> None:
        self.sent += 1
        if self.mode == ConnectionMode.PER_REQUEST:
            self._per_request(k)
        else:
            self._on_stream(_Waiter(k, self.scheduler.now, self.scheduler.now))
        if k + 1 < self.count:
            self.scheduler.schedule(self.send_time(k + 1), self._tick, k + 1)

    def finished(self) -> bool:
        return self.sent == self.count and len(self.samples) == self.count

    def ordered_samples(self) -> list[RequestSample]:
        return [self.samples[k] for k in sorted(self.samples)]

    # -- recording -------------------------------------------------------------
    def _record(self, request_id: int, sent_at: int, connect_time: int, outcome: str,
                conn: Optional[ConnectionAttempt], inst: Optional[ContainerInstance] = None,
                reconnected: bool = False) -> None:
        now = self.scheduler.now
        self.samples[request_id] = RequestSample(
            request_id=request_id,
            sent_at=to_ms(sent_at),
            connect_time=to_ms(connect_time),
            latency_time=to_ms(now - sent_at),
            outcome=outcome,
            five_tuple=tuple(conn.five_tuple) if conn is not None else None,
            serving_backend=inst.host if inst is not None else None,
            reconnected=reconnected,
        )

    # -- one connection per request ------------------------------------------
    def _per_request(self, k: int) -> None:
        sent_at = self.scheduler.now
        five_tuple = self.client.new_tuple(*self.target)

        def failed(conn: ConnectionAttempt) -> None:
            self._record(k, sent_at, self.scheduler.now - sent_at, "Error", conn)

        def established(conn: ConnectionAttempt) -> None:
            connect_time = conn.established_at - sent_at

            def result(outcome: str, inst: Optional[ContainerInstance]) -> None:
                self.client.close(conn)
                self._record(k, sent_at, connect_time, "Success" if outcome == "ok" else "Error", conn, inst)

            self.client.send_request(conn, k, result)

        self.client.open_connection(five_tuple, established, failed)

    # -- shared persistent stream ------------------------------------------------
    def _on_stream(self, waiter: _Waiter) -> None:
        stream = self._stream
        if stream is not None and stream.state == ConnState.ESTABLISHED:
            self._issue(stream, waiter, connect_time=0)
            return
        self._waiters.append(waiter)
        if stream is None or stream.state != ConnState.CONNECTING:
            self._reconnect()

    def _reconnect(self) -> None:
        five_tuple = self.client.new_tuple(*self.target)
        self._stream = self.client.open_connection(five_tuple, self._stream_up, self._stream_failed)

    def _stream_up(self, conn: ConnectionAttempt) -> None:
        if conn is not self._stream:
            self.client.close(conn)
            return
        waiters, self._waiters = self._waiters, []
        for w in waiters:
            self._issue(conn, w, connect_time=conn.established_at - max(w.connect_from, conn.started_at))

    def _stream_failed(self, conn: ConnectionAttempt) -> None:
        if conn is not self._stream:
            return
        self._stream = None
        waiters, self._waiters = self._waiters, []
        for w in waiters:
            self._record(w.request_id, w.sent_at, self.scheduler.now - w.connect_from, "Error", conn,
                         reconnected=w.reconnected)

    def _break_stream(self, conn: ConnectionAttempt) -> None:
        if conn is self._stream:
            self.client.close(conn)
            self._stream = None

    def _issue(self, conn: ConnectionAttempt, w: _Waiter, connect_time: int) -> None:
        rto = self.client.config.stream_rto_ms

        def result(outcome: str, inst: Optional[ContainerInstance]) -> None:
            if outcome == "ok":
                self._record(w.request_id, w.sent_at, connect_time, "Success", conn, inst, w.reconnected)
                return
            self._break_stream(conn)
            if outcome == "rto" and not w.reconnected:
                # the driver notices the dead stream and resends on a new one
                self._on_stream(_Waiter(w.request_id, w.sent_at, self.scheduler.now, reconnected=True))
                return
            self._record(w.request_id, w.sent_at, connect_time, "Error", conn, inst, w.reconnected)

        self.client.send_request(conn, w.request_id, result, rto_ms=rto)
