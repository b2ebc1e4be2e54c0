"""Recorded transaction histories.

A history captures, per committed transaction: its predicate scans (context
parent, predicate text, id bounds, scan vid), the object versions it
examined, and its write records with final before/after images. Recording
happens in-process at commit points, so the checker sees exactly what the
engine decided.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Optional


@dataclass
class ScanRec:
    parent: Optional[str]  # context parent path, None = root
    predicate: str  # query-language text, reparsed by the checker
    bounds: Optional[dict]  # {"low": [value, inclusive], "high": ...}
    at_vid: int


@dataclass
class WriteRec:
    path: str
    parent: Optional[str]
    kind: str
    is_leaf: bool
    before: Optional[dict]
    after: Optional[dict]


@dataclass
class TxnHistory:
    txn_id: int
    commit_vid: int
    read_vid: int
    scans: list = field(default_factory=list)
    examined: list = field(default_factory=list)  # [path, version_vid]
    writes: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "txn_id": self.txn_id,
            "commit_vid": self.commit_vid,
            "read_vid": self.read_vid,
            "scans": [vars(s) for s in self.scans],
            "examined": [[p, v] for p, v in self.examined],
            "writes": [vars(w) for w in self.writes],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TxnHistory":
        return cls(
            txn_id=obj["txn_id"],
            commit_vid=obj["commit_vid"],
            read_vid=obj["read_vid"],
            scans=[ScanRec(**s) for s in obj.get("scans", [])],
            examined=[tuple(e) for e in obj.get("examined", [])],
            writes=[WriteRec(**w) for w in obj.get("writes", [])],
        )


def _bounds_obj(bounds) -> Optional[dict]:
    if bounds is None:
        return None
    out = {}
    if bounds.low is not None:
        out["low"] = [bounds.low[0], bounds.low[1]]
    if bounds.high is not None:
        out["high"] = [bounds.high[0], bounds.high[1]]
    return out or None


class HistoryRecorder:
    """Collects committed-transaction histories; linearized at commit."""

    def __init__(self):
        self._lock = threading.Lock()
        self.transactions: list[TxnHistory] = []

    def on_commit(self, txn, records, vid: int):
        entry = TxnHistory(txn.txn_id, vid, txn.read_vid)
        for scan in txn.scan_set:
            entry.scans.append(
                ScanRec(
                    parent=None if scan.parent is None else str(scan.parent),
                    predicate=scan.predicate.to_text(),
                    bounds=_bounds_obj(scan.bounds),
                    at_vid=scan.at_vid,
                )
            )
        entry.examined = [(str(path), version_vid) for path, version_vid in txn.examined]
        for rec in records:
            entry.writes.append(
                WriteRec(
                    path=str(rec.path),
                    parent=None if rec.parent is None else str(rec.parent),
                    kind=rec.kind.value,
                    is_leaf=rec.is_leaf,
                    before=None if rec.before is None else rec.before.to_json_obj(),
                    after=None if rec.after is None else rec.after.to_json_obj(),
                )
            )
        with self._lock:
            self.transactions.append(entry)

    def sorted_history(self) -> list[TxnHistory]:
        with self._lock:
            return sorted(self.transactions, key=lambda t: t.commit_vid)

    def dump_jsonl(self, fh):
        for entry in self.sorted_history():
            fh.write(json.dumps(entry.to_json_obj(), separators=(",", ":")) + "\n")


def load_jsonl(fh) -> list[TxnHistory]:
    return [TxnHistory.from_json_obj(json.loads(line)) for line in fh if line.strip()]
