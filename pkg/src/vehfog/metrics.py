"""Delivery probability, end-to-end delay and collision ratio from an event log."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import COLLIDED, DELIVERED, DROPPED_SHADOW, NS, OUT_OF_RANGE, EventLog

RESULTS_HEADER = ["protocol", "n_vehicles", "seed", "delivery_prob", "delay_mean_s",
                  "delay_p95_s", "collision_ratio", "m_success"]
PLOT_METRICS = ("delivery_prob", "delay_mean_s", "delay_p95_s", "collision_ratio", "m_success")


@dataclass(frozen=True)
class DelayStats:
    mean: float = 0.0
    p50: float = 0.0
    p95: float = 0.0
    max: float = 0.0


@dataclass(frozen=True)
class MetricsReport:
    delivery_probability: float
    e2e_delay: DelayStats
    collision_ratio: float
    m_success: float
    counts: dict[str, int] = field(default_factory=dict)


def compute_metrics(log: EventLog, n_users: int, dmax: float = 0.1) -> MetricsReport:
    """``m_success`` is ``delivery * clamp(mean_delay / dmax) / n_users``."""
    if not log.records:
        raise ValueError("event log has no intended (message, receiver) pairs")
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    counts = {k: 0 for k in (DELIVERED, COLLIDED, DROPPED_SHADOW, OUT_OF_RANGE)}
    delays = []
    for r in log.records:
        counts[r.outcome] += 1
        if r.outcome == DELIVERED:
            delays.append(r.delay)
    intended = len(log.records)
    frames = len(log.frames)
    collided_frames = sum(f.collided for f in log.frames)
    counts.update(intended=intended, frames_sent=frames, collided_frames=collided_frames)
    delivery = counts[DELIVERED] / intended
    if delays:
        d = np.asarray(delays, dtype=np.int64)
        stats = DelayStats(float(d.sum()) / len(d) / NS, float(np.percentile(d, 50)) / NS,
                           float(np.percentile(d, 95)) / NS, float(d.max()) / NS)
    else:
        stats = DelayStats()
    ratio = collided_frames / frames if frames else 0.0
    d_norm = min(1.0, max(0.0, stats.mean / dmax)) if dmax > 0 else 0.0
    m = min(1.0, max(0.0, delivery * d_norm / n_users))
    return MetricsReport(delivery, stats, ratio, m, counts)


def report_row(report: MetricsReport, protocol: str, n_vehicles: int, seed: int) -> list[str]:
    return [protocol, str(n_vehicles), str(seed), f"{report.delivery_probability:.6f}",
            f"{report.e2e_delay.mean:.9f}", f"{report.e2e_delay.p95:.9f}",
            f"{report.collision_ratio:.6f}", f"{report.m_success:.9f}"]


def write_report(rows: Iterable[Sequence[str]], path: str | Path) -> Path:
    """Write results rows (already ordered by the caller) under the fixed header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    w.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def append_report(report: MetricsReport, path: str | Path, protocol: str,
                  n_vehicles: int, seed: int) -> None:
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(RESULTS_HEADER)
        w.writerow(report_row(report, protocol, n_vehicles, seed))


def read_results(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def mean_curves(rows: Iterable[dict[str, str]], metric: str) -> dict[str, dict[int, float]]:
    """protocol -> density -> mean of ``metric`` over seeds."""
    acc: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        acc[row["protocol"]][int(row["n_vehicles"])].append(float(row[metric]))
    return {p: {n: float(np.mean(v)) for n, v in sorted(by_n.items())} for p, by_n in acc.items()}


def write_plot_data(rows: Sequence[dict[str, str]], out_dir: str | Path,
                    protocols: Sequence[str]) -> list[Path]:
    """One whitespace-separated file per metric: density, then one column per protocol."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in PLOT_METRICS:
        curves = mean_curves(rows, metric)
        densities = sorted({n for c in curves.values() for n in c})
        lines = ["# n_vehicles " + " ".join(protocols)]
        for n in densities:
            vals = [f"{curves[p][n]:.9g}" if p in curves and n in curves[p] else "nan"
                    for p in protocols]
            lines.append(f"{n} " + " ".join(vals))
        p = out / f"{metric}.dat"
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    return paths
