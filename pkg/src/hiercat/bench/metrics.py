"""Run metrics and CSV emission."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional


def percentile(samples: list, q: float) -> float:
    if not samples:
        return 0.0
    ordered = sorted(samples)
    index = min(len(ordered) - 1, max(0, round(q * (len(ordered) - 1))))
    return ordered[index]


@dataclass
class RunMetrics:
    scheme: str
    threads: int
    mix: str
    duration: float
    committed: int
    aborted: int
    throughput: float  # committed txns / second
    abort_rate: float  # aborted / attempts
    p50: float
    p99: float
    per_op: dict  # op -> {"committed", "aborted", "p50", "p99"}
    scans: int = 0
    seeks: int = 0
    history: Optional[list] = None  # recorded TxnHistory list, when requested

    @property
    def attempts(self) -> int:
        return self.committed + self.aborted


CSV_COLUMNS = (
    "scheme", "threads", "mix", "duration", "committed", "aborted",
    "throughput", "abort_rate", "p50", "p99", "scans", "seeks",
)


def metrics_csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def metrics_to_csv_row(m: RunMetrics) -> str:
    values = (
        m.scheme, m.threads, m.mix, f"{m.duration:.3f}", m.committed, m.aborted,
        f"{m.throughput:.2f}", f"{m.abort_rate:.4f}", f"{m.p50 * 1000:.3f}",
        f"{m.p99 * 1000:.3f}", m.scans, m.seeks,
    )
    return ",".join(str(v) for v in values)


class MetricsCollector:
    """Thread-safe accumulator for per-operation outcomes and latencies."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list = []  # (op, committed, latency_seconds)

    def record(self, op: str, committed: bool, latency: float):
        with self._lock:
            self._events.append((op, committed, latency))

    def summarize(
        self,
        scheme: str,
        threads: int,
        mix: str,
        duration: float,
        scans: int = 0,
        seeks: int = 0,
    ) -> RunMetrics:
        with self._lock:
            events = list(self._events)
        committed = sum(1 for _, ok, _ in events if ok)
        aborted = len(events) - committed
        latencies = [lat for _, ok, lat in events if ok]
        per_op: dict = {}
        for op in {name for name, _, _ in events}:
            op_events = [(ok, lat) for name, ok, lat in events if name == op]
            op_done = [lat for ok, lat in op_events if ok]
            per_op[op] = {
                "committed": len(op_done),
                "aborted": len(op_events) - len(op_done),
                "p50": percentile(op_done, 0.50),
                "p99": percentile(op_done, 0.99),
            }
        return RunMetrics(
            scheme=scheme,
            threads=threads,
            mix=mix,
            duration=duration,
            committed=committed,
            aborted=aborted,
            throughput=committed / duration if duration > 0 else 0.0,
            abort_rate=aborted / len(events) if events else 0.0,
            p50=percentile(latencies, 0.50),
            p99=percentile(latencies, 0.99),
            per_op=per_op,
            scans=scans,
            seeks=seeks,
        )
