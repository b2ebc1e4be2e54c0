"""Benchmark harness: workload generators, metrics, and the recorded-history
serializability checker."""

from .checker import CheckResult, check_serializable
from .history import HistoryRecorder, ScanRec, TxnHistory, WriteRec
from .metrics import RunMetrics, metrics_csv_header, metrics_to_csv_row
from .workloads import BreadthDepthWorkload, WarehouseWorkload
from .harness import run_breadth_depth, run_warehouse

__all__ = [
    "BreadthDepthWorkload",
    "CheckResult",
    "HistoryRecorder",
    "RunMetrics",
    "ScanRec",
    "TxnHistory",
    "WarehouseWorkload",
    "WriteRec",
    "check_serializable",
    "metrics_csv_header",
    "metrics_to_csv_row",
    "run_breadth_depth",
    "run_warehouse",
]
