"""Discrete-event core: virtual clock, event queue and modeled links.

Time is kept as integer microseconds everywhere inside the simulator and
converted to milliseconds only at the reporting boundary.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

US_PER_MS = 1000

# Same-time ordering bands. Block production runs after every other callback
# scheduled for the same instant so that a transaction submitted at exactly a
# block boundary is included in that block.
PRIORITY_NORMAL = 0
PRIORITY_LATE = 1


def ms(value: float) -> int:
    """Milliseconds -> integer microseconds."""
    return int(round(value * US_PER_MS))


def seconds(value: float) -> int:
    """Seconds -> integer microseconds."""
    return int(round(value * 1_000_000))


def to_ms(us: int) -> float:
    return us / US_PER_MS


class SchedulingInPast(ValueError):
    pass


@dataclass
class SimEvent:
    fire_at: int
    seq: int
    action: Callable[..., Any]
    args: tuple = ()
    priority: int = PRIORITY_NORMAL
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


class Scheduler:
    """Single-threaded event queue ordered by (fire_at, priority, seq)."""

    def __init__(self, trace: bool = False):
        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()
        self.fired = 0
        self.trace: Optional[list] = [] if trace else None

    def schedule(self, at: int, action: Callable[..., Any], *args: Any,
                 priority: int = PRIORITY_NORMAL) -> SimEvent:
        if at < self.now:
            raise SchedulingInPast(f"cannot schedule at {at} us, clock is at {self.now} us")
        event = SimEvent(at, next(self._seq), action, args, priority)
        heapq.heappush(self._queue, (at, priority, event.seq, event))
        return event

    def after(self, delay: int, action: Callable[..., Any], *args: Any,
              priority: int = PRIORITY_NORMAL) -> SimEvent:
        return self.schedule(self.now + delay, action, *args, priority=priority)

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def step(self) -> bool:
        while self._queue:
            at, _, _, event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            self.now = at
            self.fired += 1
            if self.trace is not None:
                self.trace.append((at, event.seq, getattr(event.action, "__qualname__", repr(event.action))))
            event.action(*event.args)
            return True
        return False

    def run(self, until: Optional[int] = None) -> None:
        """Fire events until the queue drains or the next event is past `until`."""
        queue = self._queue
        while queue:
            if until is not None and queue[0][0] > until:
                self.now = max(self.now, until)
                return
            self.step()
        if until is not None:
            self.now = max(self.now, until)


@dataclass
class LinkModel:
    """One-way delay with optional seeded uniform jitter in [0, jitter]."""

    name: str
    one_way_delay: int
    jitter: int = 0
    rng: random.Random = field(default_factory=lambda: random.Random(0), repr=False)

    def __post_init__(self):
        if self.one_way_delay < 0 or self.jitter < 0:
            raise ValueError(f"link {self.name}: delays must be >= 0")

    def delay(self) -> int:
        if self.jitter:
            return self.one_way_delay + self.rng.randint(0, self.jitter)
        return self.one_way_delay


def make_links(seed: int, data_ms: float = 2.0, sdn_control_ms: float = 3.0,
               control_link_ms: float = 2.0, jitter_ms: float = 0.0) -> dict[str, LinkModel]:
    """The three networks of a domain, each with its own reproducible RNG stream."""
    spec = {"data": data_ms, "sdn_control": sdn_control_ms, "control_link": control_link_ms}
    return {
        name: LinkModel(name, ms(delay), ms(jitter_ms), random.Random(f"{seed}:link:{name}"))
        for name, delay in spec.items()
    }
