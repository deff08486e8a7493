"""Simulated permissioned ledger with periodic block production.

Transactions are queued as they are submitted and executed at the next block
boundary in a deterministic total order. Contract logs are broadcast to every
subscriber after a notification delay.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .contracts import CONTRACT_NAMES, ContractError, DomainContracts, node_sort_key
from .netsim import PRIORITY_LATE, Scheduler, ms


class UnknownContract(ValueError):
    pass


class UnregisteredSender(ValueError):
    pass


@dataclass(frozen=True)
class ContractCall:
    contract: str
    method: str
    args: dict = field(default_factory=dict)


@dataclass
class LedgerTransaction:
    tx_id: int
    sender: str
    submitted_at: int
    payload: ContractCall

    def order_key(self) -> tuple:
        return (self.submitted_at, node_sort_key(self.sender), self.tx_id)


@dataclass
class ContractLog:
    log_kind: str
    emitted_at: int
    block_height: int
    index: int
    tx_id: int
    payload: dict


@dataclass
class RejectedTx:
    tx_id: int
    sender: str
    call: str
    error: str
    message: str


@dataclass
class Block:
    height: int
    produced_at: int
    txs: list[LedgerTransaction] = field(default_factory=list)
    logs: list[ContractLog] = field(default_factory=list)
    rejected: list[RejectedTx] = field(default_factory=list)


@dataclass
class Receipt:
    tx_id: int
    ok: bool
    block_height: int
    error: Optional[str] = None


@dataclass
class Subscription:
    subscriber: str
    callback: Callable[[ContractLog], Any]
    last_delivery: int = 0
    active: bool = True

    def cancel(self) -> None:
        self.active = False


class Ledger:
    def __init__(self, scheduler: Scheduler, contracts: Optional[DomainContracts] = None,
                 block_interval_ms: float = 1000.0, notification_delay_ms: float = 5.0,
                 notification_jitter_ms: float = 0.0, seed: int = 0):
        if block_interval_ms <= 0:
            raise ValueError("block_interval must be > 0")
        self.scheduler = scheduler
        self.contracts = contracts or DomainContracts()
        self.block_interval = ms(block_interval_ms)
        self.notification_delay = ms(notification_delay_ms)
        self.notification_jitter = ms(notification_jitter_ms)
        self._rng = random.Random(f"{seed}:ledger")
        self._tx_ids = itertools.count(1)
        self.pending: list[LedgerTransaction] = []
        self.blocks: list[Block] = []
        self.subscriptions: list[Subscription] = []
        self.receipts: dict[int, Receipt] = {}
        self._receipt_callbacks: dict[int, Callable[[Receipt], Any]] = {}
        self._running = False

    # -- block production ----------------------------------------------------
    def start(self) -> None:
        """Schedule periodic production from the next boundary onwards."""
        if self._running:
            return
        self._running = True
        now = self.scheduler.now
        first = -(-now // self.block_interval) * self.block_interval
        self.scheduler.schedule(first, self._tick, priority=PRIORITY_LATE)

    def _tick(self) -> None:
        self.produce_block(self.scheduler.now)
        self.scheduler.after(self.block_interval, self._tick, priority=PRIORITY_LATE)

    def next_block_time(self, now: int) -> int:
        return -(-now // self.block_interval) * self.block_interval

    def submit_transaction(self, sender: str, payload: ContractCall, now: Optional[int] = None,
                           on_receipt: Optional[Callable[[Receipt], Any]] = None) -> int:
        if payload.contract not in CONTRACT_NAMES:
            raise UnknownContract(payload.contract)
        registering = payload.contract == "DDR" and payload.method == "register_node"
        if not registering and not self.contracts.is_registered(sender):
            raise UnregisteredSender(sender)
        now = self.scheduler.now if now is None else now
        tx = LedgerTransaction(next(self._tx_ids), sender, now, payload)
        self.pending.append(tx)
        if on_receipt is not None:
            self._receipt_callbacks[tx.tx_id] = on_receipt
        return tx.tx_id

    def produce_block(self, now: int) -> Block:
        if now % self.block_interval:
            raise ValueError(f"block time {now} is not a multiple of {self.block_interval}")
        if self.blocks and now <= self.blocks[-1].produced_at:
            raise ValueError("block production time must strictly increase")
        ready = [tx for tx in self.pending if tx.submitted_at <= now]
        self.pending = [tx for tx in self.pending if tx.submitted_at > now]
        ready.sort(key=LedgerTransaction.order_key)
        block = Block(height=len(self.blocks), produced_at=now, txs=ready)
        self.blocks.append(block)
        for tx in ready:
            call = tx.payload
            try:
                emitted = self.contracts.execute(call.contract, call.method, tx.sender, dict(call.args), now)
            except ContractError as exc:
                block.rejected.append(RejectedTx(tx.tx_id, tx.sender, f"{call.contract}.{call.method}",
                                                 type(exc).__name__, str(exc)))
                self._settle(Receipt(tx.tx_id, False, block.height, type(exc).__name__), now)
                continue
            for kind, payload in emitted:
                log = ContractLog(kind, now, block.height, len(block.logs), tx.tx_id, payload)
                block.logs.append(log)
                self._broadcast(log)
            self._settle(Receipt(tx.tx_id, True, block.height), now)
        return block

    def _settle(self, receipt: Receipt, now: int) -> None:
        self.receipts[receipt.tx_id] = receipt
        callback = self._receipt_callbacks.pop(receipt.tx_id, None)
        if callback is not None:
            self.scheduler.schedule(now + self.notification_delay, callback, receipt)

    # -- log fan-out -------------------------------------------------------
    def subscribe_logs(self, subscriber: str, callback: Callable[[ContractLog], Any]) -> Subscription:
        sub = Subscription(subscriber, callback)
        self.subscriptions.append(sub)
        return sub

    def _broadcast(self, log: ContractLog) -> None:
        for sub in self.subscriptions:
            if not sub.active:
                continue
            at = log.emitted_at + self.notification_delay
            if self.notification_jitter:
                at += self._rng.randint(0, self.notification_jitter)
            # per-subscriber delivery stays in emission order
            at = max(at, sub.last_delivery)
            sub.last_delivery = at
            self.scheduler.schedule(at, self._deliver, sub, log)

    @staticmethod
    def _deliver(sub: Subscription, log: ContractLog) -> None:
        if sub.active:
            sub.callback(log)

    # -- inspection ----------------------------------------------------------
    def all_logs(self) -> list[ContractLog]:
        return [log for block in self.blocks for log in block.logs]

    def executed_txs(self) -> list[tuple[Block, LedgerTransaction]]:
        return [(block, tx) for block in self.blocks for tx in block.txs]
