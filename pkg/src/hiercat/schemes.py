"""Pluggable concurrency control schemes.

All three share the multi-version read path for read-only transactions and
differ in how read-write transactions are checked:

- OSPL (default): optimistic scan-range locking prunes candidate conflicts
  through the VersionMap, then precision locking evaluates the recorded scan
  predicates directly against posted before/after images.
- OSL: optimistic scan-range locking only; a scan conflicts with any posted
  write whose child id falls inside the scanned id range (the whole parent
  range when the plan had no bounds). No predicate evaluation.
- MGL: strict two-phase locking with multiple-granularity intention locks
  (IS/IX on ancestors, S on scanned parents, X on written children) and
  wait-timeout deadlock handling.
"""

from __future__ import annotations

import threading
import time
from typing import Optional

from .errors import ConflictAbort
from .paths import Path, encode_key
from .querylang import Predicate
from .store import IdBounds
from .txn import (
    ROOT_KEY,
    ScanEntry,
    TransactionManager,
    TxnSession,
    WriteKind,
    WriteOp,
    parent_key,
)


class CCScheme:
    """Hooks invoked by the engine around scans, commits, and finishes."""

    name = "base"
    uses_log_structures = False

    def __init__(self, manager: TransactionManager):
        self.mgr = manager

    def read_vid_for(self, txn: TxnSession) -> int:
        return txn.read_vid

    def on_scan(self, txn: TxnSession, parent: Optional[Path],
                predicate: Predicate, bounds: Optional[IdBounds]) -> int:
        """Record one predicate range scan; returns the vid to scan at."""
        at = self.read_vid_for(txn)
        txn.scan_set.append(ScanEntry(parent, predicate, bounds, at))
        return at

    def on_lock(self, txn: TxnSession, path: Optional[Path], mode: str):
        pass

    def on_validate(self, txn: TxnSession):
        pass

    def before_commit(self, txn: TxnSession, write_ops: list[WriteOp]):
        pass

    def on_finish(self, txn: TxnSession, committed: bool):
        pass


class OSPLScheme(CCScheme):
    """Optimistic scan-range plus precision locking."""

    name = "ospl"
    uses_log_structures = True

    def on_validate(self, txn: TxnSession):
        mgr = self.mgr

        def check(entries):
            for entry in entries:
                pk = parent_key(entry.parent)
                # scan range locking: skip untouched parents cheaply
                if mgr.version_map.get(pk) <= txn.read_vid:
                    continue
                for rec in mgr.log_index.range(pk, txn.read_vid, txn.commit_vid):
                    mgr.ensure_images(rec)
                    # precision locking
                    if rec.before is not None and entry.predicate.matches(
                        rec.object_id, rec.before
                    ):
                        raise ConflictAbort("validation-conflict")
                    if rec.after is not None and entry.predicate.matches(
                        rec.object_id, rec.after
                    ):
                        raise ConflictAbort("validation-conflict")

        partitions = mgr.partitioned(txn.scan_set, mgr.workers_validate)
        mgr.run_partitions(check, partitions)


class OSLScheme(CCScheme):
    """Optimistic scan-range locking: any posted write inside a scanned id
    range conflicts, whether or not the predicate cares about it."""

    name = "osl"
    uses_log_structures = True

    def on_validate(self, txn: TxnSession):
        mgr = self.mgr

        def check(entries):
            for entry in entries:
                pk = parent_key(entry.parent)
                if mgr.version_map.get(pk) <= txn.read_vid:
                    continue
                for rec in mgr.log_index.range(pk, txn.read_vid, txn.commit_vid):
                    if entry.bounds is None or entry.bounds.admits(rec.object_id):
                        raise ConflictAbort("range-conflict")

        partitions = mgr.partitioned(txn.scan_set, mgr.workers_validate)
        mgr.run_partitions(check, partitions)


# -- multiple granularity locking -------------------------------------------

IS, IX, S, X = "IS", "IX", "S", "X"

_COMPAT = {
    (IS, IS): True, (IS, IX): True, (IS, S): True, (IS, X): False,
    (IX, IS): True, (IX, IX): True, (IX, S): False, (IX, X): False,
    (S, IS): True, (S, IX): False, (S, S): True, (S, X): False,
    (X, IS): False, (X, IX): False, (X, S): False, (X, X): False,
}


# a held mode also satisfies requests for these weaker modes
_COVERS = {IS: {IS}, IX: {IX, IS}, S: {S, IS}, X: {X, S, IX, IS}}


class LockTable:
    """FIFO-fair lock table: an incompatible waiter blocks later requests on
    the same key, so a writer queued behind readers is not starved."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._holders: dict[bytes, dict[int, set]] = {}
        self._waiters: dict[bytes, list] = {}  # [ticket, txn_id, mode]
        self._tickets = 0

    def acquire(self, txn_id: int, key: bytes, mode: str, timeout: float) -> bool:
        with self._cond:
            holders = self._holders.get(key)
            if holders is None:
                if key not in self._waiters:
                    self._holders[key] = {txn_id: {mode}}
                    return True
                return self._acquire_slow(txn_id, key, mode, timeout)
            held = holders.get(txn_id)
            if held is not None:
                if any(mode in _COVERS[h] for h in held):
                    return True
                if self._compatible(txn_id, key, mode):
                    # conversions bypass the FIFO queue, otherwise a holder
                    # converting behind a waiter deadlocks on itself
                    held.add(mode)
                    return True
            elif key not in self._waiters and self._compatible(txn_id, key, mode):
                holders.setdefault(txn_id, set()).add(mode)
                return True
            return self._acquire_slow(txn_id, key, mode, timeout)

    def _acquire_slow(self, txn_id: int, key: bytes, mode: str, timeout: float) -> bool:
        # caller holds the condition lock; FIFO: head waiter goes first
        deadline = time.monotonic() + timeout
        self._tickets += 1
        entry = [self._tickets, txn_id, mode]
        queue = self._waiters.setdefault(key, [])
        queue.append(entry)
        try:
            while True:
                if queue[0] is entry and self._compatible(txn_id, key, mode):
                    self._holders.setdefault(key, {}).setdefault(txn_id, set()).add(mode)
                    return True
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        finally:
            queue.remove(entry)
            if not queue:
                self._waiters.pop(key, None)
            self._cond.notify_all()

    def _compatible(self, txn_id: int, key: bytes, mode: str) -> bool:
        for other_id, modes in self._holders.get(key, {}).items():
            if other_id == txn_id:
                continue
            if any(not _COMPAT[(mode, held)] for held in modes):
                return False
        return True

    def release_all(self, txn_id: int, keys):
        with self._cond:
            for key in keys:
                entry = self._holders.get(key)
                if entry is not None:
                    entry.pop(txn_id, None)
                    if not entry:
                        del self._holders[key]
            self._cond.notify_all()

    def holders(self, key: bytes) -> dict:
        with self._cond:
            return {t: set(m) for t, m in self._holders.get(key, {}).items()}


class MGLScheme(CCScheme):
    """Strict 2PL with intention locks; reads happen at the latest committed
    vid so lock-serialized transactions observe each other's writes.

    Two lockable units exist per path: the node (its set of children, the
    unit of phantom protection for child scans) and the record (the object's
    own value). A child scan takes S on the parent node; a scan bounded to a
    single child id takes S on just that child's record; a write takes X on
    the written record plus IX up the node chain.
    """

    name = "mgl"
    uses_log_structures = False

    def __init__(self, manager: TransactionManager):
        super().__init__(manager)
        self.locks = LockTable()

    def read_vid_for(self, txn: TxnSession) -> int:
        return self.mgr.read_vid

    def _acquire(self, txn: TxnSession, key: bytes, mode: str):
        # txn-local cache: a session runs on one thread at a time, so the
        # held-modes map can be consulted without touching the table lock
        held = txn.lock_modes.get(key)
        if held is not None and any(mode in _COVERS[h] for h in held):
            return
        if not self.locks.acquire(txn.txn_id, key, mode, self.mgr.lock_timeout):
            raise ConflictAbort("lock-timeout")
        if held is None:
            txn.lock_keys.append(key)
            txn.lock_modes[key] = {mode}
        else:
            held.add(mode)

    def on_lock(self, txn: TxnSession, path: Path, mode: str):
        """Object-granularity lock: the record plus, for exclusive access,
        the object's own child-set node. Used for remove expansion."""
        self._acquire(txn, _record_key(encode_key(path)), mode)
        if mode == X:
            self._acquire(txn, _node_key(encode_key(path)), X)

    def on_scan(self, txn, parent, predicate, bounds):
        if txn.mode == "read_write":
            point_id = _point_bound(bounds)
            if point_id is not None:
                child = parent.child(point_id) if parent is not None else Path([point_id])
                self._acquire(txn, _record_key(encode_key(child)), S)
            else:
                self._acquire(txn, _node_key(parent_key(parent)), S)
        at = self.read_vid_for(txn)
        txn.scan_set.append(ScanEntry(parent, predicate, bounds, at))
        return at

    def before_commit(self, txn: TxnSession, write_ops: list[WriteOp]):
        wants: dict[bytes, str] = {}

        def want(key: bytes, mode: str):
            wants[key] = _combine(wants.get(key), mode)

        for op in write_ops:
            parent = op.path.parent()
            # a write changes its direct parent's child set, not the child
            # sets higher up; removes additionally freeze their own subtree
            # (the expansion X-locks every descendant via on_lock)
            want(_node_key(parent_key(parent)), IX)
            want(_record_key(encode_key(op.path)), X)
            if op.kind == WriteKind.REMOVE:
                want(_node_key(encode_key(op.path)), X)
        # deterministic order cuts most deadlocks; timeouts catch the rest
        for key in sorted(wants):
            self._acquire(txn, key, wants[key])

    def on_finish(self, txn: TxnSession, committed: bool):
        if txn.lock_keys:
            self.locks.release_all(txn.txn_id, set(txn.lock_keys))
            txn.lock_keys.clear()
            txn.lock_modes.clear()


def _node_key(key: bytes) -> bytes:
    return b"n:" + key


def _record_key(key: bytes) -> bytes:
    return b"r:" + key


def _point_bound(bounds: Optional[IdBounds]) -> Optional[str]:
    """The single child id a scan is bounded to, if the bounds pin one."""
    if bounds is None or bounds.low is None or bounds.high is None:
        return None
    low_value, low_inclusive = bounds.low
    high_value, high_inclusive = bounds.high
    if low_inclusive and high_inclusive and low_value == high_value and isinstance(low_value, str):
        return low_value
    return None


_STRENGTH = {IS: 0, IX: 1, S: 1, X: 2}


def _stronger(a: str, b: str) -> bool:
    return _STRENGTH[a] > _STRENGTH[b]


def _combine(held: Optional[str], mode: str) -> str:
    if held is None or held == mode:
        return mode
    if X in (held, mode):
        return X
    if {held, mode} == {IX, S}:
        return X  # SIX not modeled; escalate
    return mode if _stronger(mode, held) else held


SCHEMES = {
    "ospl": OSPLScheme,
    "osl": OSLScheme,
    "mgl": MGLScheme,
}


def scheme_factory(name: str):
    try:
        cls = SCHEMES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown concurrency scheme: {name!r}") from None
    return cls
