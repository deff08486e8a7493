"""Request samples, availability and latency statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

SAMPLES_SCHEMA = "fogdomain.samples/1"
SUMMARY_SCHEMA = "fogdomain.summary/1"

MS_PER_HOUR = 3_600_000.0
MS_PER_DAY = 86_400_000.0


class EmptySampleSet(ValueError):
    pass


@dataclass
class RequestSample:
    request_id: int
    sent_at: float        # ms
    connect_time: float   # ms
    latency_time: float   # ms; time-to-failure for errors
    outcome: str          # Success | Error
    five_tuple: Optional[tuple] = None
    serving_backend: Optional[str] = None
    reconnected: bool = False

    @property
    def ok(self) -> bool:
        return self.outcome == "Success"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["five_tuple"] = list(self.five_tuple) if self.five_tuple is not None else None
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RequestSample":
        rec = dict(rec)
        if rec.get("five_tuple") is not None:
            rec["five_tuple"] = tuple(rec["five_tuple"])
        return cls(**rec)


@dataclass
class RateCounts:
    per_hour: float
    per_day: float
    total: int


@dataclass
class SummaryStats:
    migrations: RateCounts
    requests: RateCounts
    errors: int
    max_latency: Optional[float]
    min_latency: Optional[float]
    avg_latency: Optional[float]
    latency_stddev: Optional[float]
    availability: float
    availability_per_day: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def availability(requests: int, errors: int) -> float:
    # single rounding: (r - e) / r is exact-to-nearest for integer inputs
    return (requests - errors) / requests


def compute_summary(samples: Sequence[RequestSample], migrations: Iterable[float] = (),
                    duration_ms: Optional[float] = None, start_ms: float = 0.0) -> SummaryStats:
    """Table-style statistics over one run.

    ``migrations`` holds the completion times (ms) of solved migrations.
    Latency statistics use Success samples only; errors are counted apart.
    Day buckets are taken relative to ``start_ms`` and cover ``duration_ms``.
    """
    if not samples:
        raise EmptySampleSet("no samples")
    migrations = list(migrations)
    if duration_ms is None:
        duration_ms = max(s.sent_at for s in samples) - start_ms or 1.0
    hours = duration_ms / MS_PER_HOUR
    days = duration_ms / MS_PER_DAY
    n = len(samples)
    errors = sum(1 for s in samples if not s.ok)
    ok_latencies = [s.latency_time for s in samples if s.ok]
    if ok_latencies:
        mean, std = _mean_std(ok_latencies)
        lat = (max(ok_latencies), min(ok_latencies), mean, std)
    else:
        lat = (None, None, None, None)

    n_days = max(1, math.ceil(duration_ms / MS_PER_DAY - 1e-12))
    per_day_req = [0] * n_days
    per_day_err = [0] * n_days
    for s in samples:
        day = min(n_days - 1, max(0, int((s.sent_at - start_ms) // MS_PER_DAY)))
        per_day_req[day] += 1
        if not s.ok:
            per_day_err[day] += 1
    per_day = [availability(r, e) if r else 1.0 for r, e in zip(per_day_req, per_day_err)]

    return SummaryStats(
        migrations=RateCounts(len(migrations) / hours, len(migrations) / days, len(migrations)),
        requests=RateCounts(n / hours, n / days, n),
        errors=errors,
        max_latency=lat[0], min_latency=lat[1], avg_latency=lat[2], latency_stddev=lat[3],
        availability=availability(n, errors),
        availability_per_day=per_day,
    )


def percentile_report(samples: Sequence[RequestSample], thresholds: Iterable[float] = (30.0,),
                      percentiles: Iterable[float] = (50, 90, 95, 99)) -> dict:
    """Fraction of Success samples strictly below each threshold, plus percentiles."""
    latencies = np.array([s.latency_time for s in samples if s.ok], dtype=float)
    if latencies.size == 0:
        raise EmptySampleSet("no successful samples")
    below = {float(t): float(np.count_nonzero(latencies < t)) / latencies.size for t in thresholds}
    pct = {int(p) if float(p).is_integer() else float(p): float(np.percentile(latencies, p))
           for p in percentiles}
    return {"count": int(latencies.size), "below": below, "percentiles": pct}


# -- file formats --------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_samples(path, samples: Sequence[RequestSample], header: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"schema": SAMPLES_SCHEMA, **header}) + "\n")
        for s in samples:
            fh.write(_dumps(s.to_record()) + "\n")


def read_samples(path) -> tuple[dict, list[RequestSample]]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EmptySampleSet(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("schema") != SAMPLES_SCHEMA:
        raise ValueError(f"{path}: unexpected schema {header.get('schema')!r}")
    return header, [RequestSample.from_record(json.loads(line)) for line in lines[1:] if line]


def write_summary(path, summary: SummaryStats, header: dict) -> None:
    doc = {"schema": SUMMARY_SCHEMA, **header, **summary.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
