"""Embeddable catalog engine: sessions, queries, commits, snapshots, clones.

Ties the versioned path store, the query executor, and the transaction
manager together behind the public API. One engine owns one data directory
(or an in-memory store) and may be shared freely across threads.
"""

from __future__ import annotations

import threading
from dataclasses import replace
from typing import Iterator, Optional, Union

from .config import EngineConfig
from .document import Document
from .errors import CatalogError, PreconditionFailed
from .executor import ScanCounters, ScanSink, execute, plan_query
from .paths import Path, Vid
from .querylang import PathQuery, parse_query
from .schemes import scheme_factory
from .store import PathStore
from .txn import TransactionManager, TxnSession, WriteOp
from .versioning import SnapshotEntry, SnapshotRegistry, build_clone_ops


class _TxnSink(ScanSink):
    """Routes a read-write transaction's scans to its concurrency scheme."""

    def __init__(self, engine: "CatalogEngine", txn: TxnSession):
        self.engine = engine
        self.txn = txn

    def begin_scan(self, parent, predicate, bounds):
        if self.txn.state != "active":
            raise CatalogError(f"transaction {self.txn.txn_id} is {self.txn.state}")
        return self.engine.txns.scheme.on_scan(self.txn, parent, predicate, bounds)

    def on_examined(self, hit):
        if self.engine.txns.recorder is not None:
            self.txn.examined.append((hit.path, hit.version_vid))


class CatalogEngine:
    def __init__(
        self,
        config: Optional[EngineConfig] = None,
        recorder=None,
        record_flush_groups: bool = False,
        **overrides,
    ):
        if config is None:
            config = EngineConfig()
        if overrides:
            config = replace(config, **overrides)
        self.config = config
        self.store = PathStore(config.data_dir)
        self.txns = TransactionManager(
            self.store,
            scheme_factory(config.cc_scheme),
            workers_validate=config.workers_validate,
            workers_write=config.workers_write,
            lock_timeout=config.lock_timeout,
            recorder=recorder,
            record_flush_groups=record_flush_groups,
        )
        self.snapshots = SnapshotRegistry(self.store)
        self._closed = False
        self._gc_stop = threading.Event()
        self._gc_thread = None
        if config.gc_interval:
            self._gc_thread = threading.Thread(
                target=self._gc_loop, name="catalog-gc", daemon=True
            )
            self._gc_thread.start()

    # -- lifecycle ---------------------------------------------------------

    def close(self):
        if self._closed:
            return
        self._closed = True
        self._gc_stop.set()
        if self._gc_thread is not None:
            self._gc_thread.join(timeout=2)
        self.txns.close()
        self.store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _gc_loop(self):
        while not self._gc_stop.wait(self.config.gc_interval):
            try:
                self.txns.gc_tick()
            except Exception:  # GC must never take the engine down
                pass

    # -- transactions --------------------------------------------------------

    @property
    def read_vid(self) -> Vid:
        return self.txns.read_vid

    def start_transaction(self, mode: str = "read_write") -> TxnSession:
        return self.txns.start_transaction(mode)

    def commit(self, txn: Union[TxnSession, int], write_set) -> Vid:
        if isinstance(txn, int):
            txn = self.txns.get_session(txn)
        ops = [
            op if isinstance(op, WriteOp) else WriteOp.from_json_obj(op)
            for op in write_set
        ]
        return self.txns.commit(txn, ops)

    def abort(self, txn: Union[TxnSession, int]):
        if isinstance(txn, int):
            txn = self.txns.get_session(txn)
        self.txns.abort(txn)

    def gc_tick(self) -> Vid:
        return self.txns.gc_tick()

    # -- queries ---------------------------------------------------------------

    def execute_query(
        self,
        query: Union[str, PathQuery],
        txn: Optional[Union[TxnSession, int]] = None,
        at: Optional[Vid] = None,
        snapshot: Optional[str] = None,
        counters: Optional[ScanCounters] = None,
    ) -> Iterator[tuple[Path, Document]]:
        """Stream (path, document) results.

        Reads happen at, in order of precedence: the transaction's read vid,
        an explicit vid, a named snapshot's vid, or the current read vid.
        """
        parsed = parse_query(query) if isinstance(query, str) else query
        plan = plan_query(parsed, self.config.batch_size)
        if txn is not None:
            if at is not None or snapshot is not None:
                raise CatalogError("cannot combine a transaction with an explicit vid")
            if isinstance(txn, int):
                txn = self.txns.get_session(txn)
            if txn.mode == "read_write":
                sink = _TxnSink(self, txn)
                base = self.txns.scheme.read_vid_for(txn)
                return execute(self.store, plan, base, scan_sink=sink, counters=counters)
            at = txn.read_vid
        if snapshot is not None:
            if at is not None:
                raise CatalogError("cannot combine a snapshot name with an explicit vid")
            at = self.snapshots.resolve(snapshot)
        if at is None:
            at = self.txns.read_vid
        elif at > self.txns.read_vid:
            raise PreconditionFailed("future-vid", str(at))
        return execute(self.store, plan, at, counters=counters)

    # -- version control ----------------------------------------------------------

    def snapshot(self, name: str, vid: Optional[Vid] = None) -> SnapshotEntry:
        read = self.txns.read_vid
        return self.snapshots.create(name, read if vid is None else vid, read)

    def clone(
        self,
        src: Union[str, Path],
        dest: Union[str, Path],
        vid: Optional[Vid] = None,
    ) -> Vid:
        """Clone src's subtree (as of vid, default now) under dest as one
        serializable transaction; leaf objects are shared via aliases."""
        src = Path.parse(src) if isinstance(src, str) else src
        dest = Path.parse(dest) if isinstance(dest, str) else dest
        txn = self.txns.start_transaction("read_write")
        try:
            ops = build_clone_ops(self.store, self.txns.scheme, txn, src, dest, vid)
            return self.txns.commit(txn, ops)
        except BaseException:
            if txn.state == "active":
                self.txns.abort(txn)
            raise

    # -- introspection ----------------------------------------------------------

    def status(self) -> dict:
        return {
            "read_vid": self.txns.read_vid,
            "active_txns": self.txns.active_sessions(),
            "watermark": self.txns.watermark(),
        }

    @property
    def sync_count(self) -> int:
        return self.store.sync_count

    def prune_history(self, floor: Vid) -> int:
        """Drop history no snapshot or live transaction can still reach."""
        pinned = self.snapshots.min_pinned()
        effective = min(floor, self.txns.watermark())
        if pinned is not None:
            effective = min(effective, pinned)
        return self.store.prune_history(effective)
