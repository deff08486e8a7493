import json
import math
from fractions import Fraction

import pytest

from fogdomain.metrics import (
    EmptySampleSet, RequestSample, availability, compute_summary, percentile_report, read_samples, write_samples,
)


def sample(i, latency, ok=True, sent=None):
    return RequestSample(i, float(sent if sent is not None else i * 1000), min(latency, 10.0), float(latency),
                         "Success" if ok else "Error", ("a", 1, "b", 2, "TCP"), "node1" if ok else None)


def test_availability_examples():
    assert availability(144000, 2) == pytest.approx(0.9999861, abs=5e-8)
    assert availability(432000, 34) == pytest.approx(0.9999213, abs=5e-8)
    assert availability(100, 0) == 1.0
    assert availability(144000, 2) == float(Fraction(143998, 144000))


def test_rates_per_hour_and_day():
    samples = [sample(i, 16, sent=i * 3000) for i in range(1200)]
    s = compute_summary(samples, migrations=[1.0] * 66, duration_ms=3_600_000)
    assert s.requests.per_hour == 1200 and s.requests.per_day == 28800
    assert s.migrations.total == 66


def test_latency_stats_use_successes_only():
    samples = [sample(0, 10), sample(1, 20), sample(2, 900, ok=False)]
    s = compute_summary(samples, duration_ms=3000)
    assert s.errors == 1 and s.max_latency == 20 and s.min_latency == 10
    assert s.avg_latency == 15 and s.latency_stddev == pytest.approx(math.sqrt(50))
    assert s.availability == 2 / 3


def test_day_buckets_partition_duration():
    day = 86_400_000
    samples = [sample(0, 5, sent=0), sample(1, 5, ok=False, sent=day - 1), sample(2, 5, sent=day),
               sample(3, 5, ok=False, sent=2 * day + 1)]
    s = compute_summary(samples, duration_ms=3 * day)
    assert s.availability_per_day == [0.5, 1.0, 0.0]


def test_empty_set_rejected():
    with pytest.raises(EmptySampleSet):
        compute_summary([])
    with pytest.raises(EmptySampleSet):
        percentile_report([sample(0, 5, ok=False)])


def test_percentile_report():
    rep = percentile_report([sample(0, 10), sample(1, 20), sample(2, 40)], thresholds=[30])
    assert rep["below"][30.0] == pytest.approx(2 / 3)
    flat = percentile_report([sample(i, 7) for i in range(9)])
    assert flat["percentiles"][50] == flat["percentiles"][99] == 7


def test_samples_round_trip(tmp_path):
    rows = [sample(0, 16), sample(1, 900, ok=False)]
    path = tmp_path / "s.jsonl"
    write_samples(path, rows, {"seed": 3})
    header, back = read_samples(path)
    assert header["seed"] == 3 and back == rows
    assert json.loads(path.read_text().splitlines()[1])["outcome"] == "Success"
