"""Plot-ready CSV series from run artifact directories (no rendering)."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .metrics import read_samples

FIGURES = ("f6", "f7", "f8a", "f8b", "f8c", "f9", "f10")
MIGRATION_PROFILE = {"f8a": "nginx", "f8b": "nextcloud", "f8c": "postgres"}
CDF_STEP_MS = 1.0


class IncompatibleScenario(ValueError):
    pass


class _Run:
    def __init__(self, path: Path):
        self.path = path
        samples_file = path / "samples.jsonl"
        if not samples_file.exists():
            raise IncompatibleScenario(f"{path}: no samples.jsonl")
        self.header, self.samples = read_samples(samples_file)
        meta = path / "metadata.json"
        self.metadata = json.loads(meta.read_text()) if meta.exists() else {}
        summary = path / "summary.json"
        self.summary = json.loads(summary.read_text()) if summary.exists() else {}
        self.kind = self.header.get("kind")
        self.profile = self.header.get("profile")
        self.label = f"R={self.header.get('R'):g},H={str(self.header.get('H')).lower()}"

    @property
    def workload_start_ms(self) -> float:
        return 1000.0 * self.metadata.get("config", {}).get("workload_start_s", 0.0)

    def require(self, kinds: Iterable[str], profile: Optional[str] = None) -> "_Run":
        kinds = tuple(kinds)
        if not self.samples:
            raise IncompatibleScenario(f"{self.path}: run has no samples")
        if self.kind not in kinds:
            raise IncompatibleScenario(f"{self.path}: kind {self.kind!r}, need one of {kinds}")
        if profile is not None and self.profile != profile:
            raise IncompatibleScenario(f"{self.path}: profile {self.profile!r}, need {profile!r}")
        return self


def _timeline(run: _Run) -> list[list]:
    t0 = run.workload_start_ms
    return [[s.request_id, round((s.sent_at - t0) / 1000.0, 6), s.connect_time, s.latency_time,
             s.outcome, s.serving_backend or ""] for s in run.samples]


TIMELINE_COLUMNS = ["request_index", "time_s", "connect_ms", "latency_ms", "outcome", "backend"]


def _cdf(run: _Run) -> list[list]:
    ok = sorted(s.latency_time for s in run.samples if s.outcome == "Success")
    if not ok:
        raise IncompatibleScenario(f"{run.path}: no successful requests")
    rows, i = [], 0
    upper = CDF_STEP_MS
    while True:
        while i < len(ok) and ok[i] < upper:
            i += 1
        rows.append([upper, round(100.0 * i / len(ok), 6)])
        if i == len(ok):
            return rows
        upper += CDF_STEP_MS


def _write(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def figure_data(run_dirs: Union[str, Path, Sequence[Union[str, Path]]], figure: str,
                out_dir: Optional[Union[str, Path]] = None) -> Path:
    """Write ``<figure>.csv`` and return its path.

    f6/f7 take a deploy run, f8a-c a migration run of nginx, nextcloud or
    postgres, f9 one or more soak runs, f10 runs that differ in R and H.
    """
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {FIGURES}")
    if isinstance(run_dirs, (str, Path)):
        run_dirs = [run_dirs]
    runs = [_Run(Path(p)) for p in run_dirs]
    if not runs:
        raise IncompatibleScenario("no runs given")
    out = Path(out_dir) if out_dir is not None else runs[0].path
    target = out / f"{figure}.csv"

    if figure == "f6":
        return _write(target, TIMELINE_COLUMNS, _timeline(runs[0].require(["deploy"])))
    if figure == "f7":
        return _write(target, ["latency_below_ms", "percent_of_requests"], _cdf(runs[0].require(["deploy"])))
    if figure in MIGRATION_PROFILE:
        run = runs[0].require(["migrate"], MIGRATION_PROFILE[figure])
        return _write(target, TIMELINE_COLUMNS, _timeline(run))
    if figure == "f9":
        rows = []
        for run in runs:
            run.require(["availability_soak"])
            for day, value in enumerate(run.summary.get("availability_per_day", []), start=1):
                rows.append([run.label, day, round(100.0 * value, 6)])
        return _write(target, ["series", "day", "availability_percent"], rows)
    rows = []
    for run in runs:
        run.require(["migrate", "availability_soak", "custom"])
        t0 = run.workload_start_ms
        rows.extend([run.label, s.request_id, round((s.sent_at - t0) / 1000.0, 6), s.latency_time, s.outcome]
                    for s in run.samples)
    return _write(target, ["series", "request_index", "time_s", "latency_ms", "outcome"], rows)
