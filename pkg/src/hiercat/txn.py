"""Transaction lifecycle and the commit pipeline.

Writes are client-buffered and submitted as a whole write set. A commit runs
through two stages, each admitting one transaction at a time but overlapping
with the other (pipelining):

1. validation: a commit vid is drawn by fetch-and-increment, existence
   preconditions are re-checked against the exact pre-commit state, the
   scheme's validator evaluates the transaction's recorded predicate scans
   against posted writes, and on pass the transaction's own write records
   are installed for later validators to see.
2. write: transactions enter strictly in commit-vid order, evaluate merge
   final values, apply one atomic store batch, join a group log sync, and
   publish the new read vid.

Validation structures: VersionMap maps a parent path to the newest vid that
changed its children; LogIndex orders posted write records by (parent, vid,
child) so a validator only evaluates records inside its scan ranges and vid
window. A record installed at validation always commits (barring storage
failure), which is what lets later validators reconstruct exact before
images from the applied state plus the pending record chain. Both structures
are pruned below the watermark, the oldest read vid among live read-write
sessions.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from sortedcontainers import SortedDict

from .document import Delta, Document, PreconditionDeltaError, apply_delta
from .errors import (
    CatalogError,
    ConflictAbort,
    EngineReadOnly,
    PreconditionFailed,
    StorageError,
)
from .paths import Path, Vid, encode_key
from .querylang import Predicate, Wildcard
from .store import (
    DeleteInner,
    IdBounds,
    PathStore,
    PutInner,
    PutLeaf,
    PutLeafAlias,
    TombstoneLeaf,
)

ROOT_KEY = b""  # parent key of depth-1 objects


def parent_key(parent: Optional[Path]) -> bytes:
    return ROOT_KEY if parent is None else encode_key(parent)


class WriteKind(Enum):
    ADD = "add"
    UPDATE = "update"
    REMOVE = "remove"
    MERGE = "merge"
    ADD_ALIAS = "add_alias"  # internal: produced by clone


class WriteOp:
    """One client write: (path, type, value), plus a leaf marker for adds.

    Add carries a document, Merge carries a delta, Remove carries nothing.
    """

    __slots__ = ("path", "kind", "value", "leaf")

    def __init__(self, path: Path, kind: WriteKind, value=None, leaf: bool = False):
        self.path = path
        self.kind = kind
        self.value = value
        self.leaf = leaf

    def __repr__(self):
        return f"WriteOp({self.kind.value} {self.path})"

    @classmethod
    def from_json_obj(cls, obj: dict) -> "WriteOp":
        try:
            path = Path.parse(obj["path"])
            kind = WriteKind(obj["type"])
        except (KeyError, ValueError, CatalogError) as exc:
            raise PreconditionFailed("malformed-write", repr(obj)) from exc
        leaf = bool(obj.get("leaf", False))
        value = None
        try:
            if kind in (WriteKind.ADD, WriteKind.UPDATE):
                value = Document.from_json_obj(obj.get("value") or {})
            elif kind == WriteKind.MERGE:
                value = Delta.from_json_obj(obj.get("value") or {})
            elif kind == WriteKind.ADD_ALIAS:
                raise PreconditionFailed("malformed-write", "alias writes are internal")
        except ValueError as exc:
            raise PreconditionFailed("malformed-write", str(exc)) from exc
        return cls(path, kind, value, leaf)

    def to_json_obj(self) -> dict:
        out = {"path": str(self.path), "type": self.kind.value}
        if isinstance(self.value, (Document, Delta)):
            out["value"] = self.value.to_json_obj()
        if self.leaf:
            out["leaf"] = True
        return out


class LogRecord:
    """Before/after images of one write, shared via the LogIndex.

    Merge images cannot exist until the prior value is known; they are
    constructed when the owning transaction validates and cached. Once
    images_ready is set the images never change.
    """

    __slots__ = (
        "parent",
        "parent_key",
        "path",
        "object_id",
        "kind",
        "is_leaf",
        "vid",
        "new_doc",
        "delta",
        "alias_primary",
        "is_remove_target",
        "before",
        "after",
        "images_ready",
    )

    def __init__(self, parent, path, kind, is_leaf, new_doc=None, delta=None,
                 alias_primary=None, is_remove_target=False):
        self.parent = parent
        self.parent_key = parent_key(parent)
        self.path = path
        self.object_id = path.object_id
        self.kind = kind
        self.is_leaf = is_leaf
        self.vid = 0
        self.new_doc = new_doc
        self.delta = delta
        self.alias_primary = alias_primary
        self.is_remove_target = is_remove_target
        self.before = None
        self.after = None
        self.images_ready = False

    def __repr__(self):
        return f"LogRecord({self.kind.value} {self.path} @ {self.vid})"


@dataclass
class ScanEntry:
    """One predicate range scan: context parent, predicate, optional bounds,
    and the vid the scan actually read at."""

    parent: Optional[Path]
    predicate: Predicate
    bounds: Optional[IdBounds]
    at_vid: Vid


@dataclass
class TxnSession:
    txn_id: int
    mode: str
    read_vid: Vid
    state: str = "active"
    commit_vid: Optional[Vid] = None
    scan_set: list = field(default_factory=list)
    examined: list = field(default_factory=list)
    lock_keys: list = field(default_factory=list)  # MGL bookkeeping
    lock_modes: dict = field(default_factory=dict)  # key -> set of held modes


class VersionMap:
    """parent path -> newest vid of any child modification."""

    def __init__(self):
        self._map: dict[bytes, Vid] = {}
        self._lock = threading.Lock()

    def get(self, key: bytes) -> Vid:
        with self._lock:
            return self._map.get(key, 0)

    def bump_all(self, keys: Iterable[bytes], vid: Vid):
        with self._lock:
            for key in keys:
                if self._map.get(key, 0) < vid:
                    self._map[key] = vid

    def prune(self, watermark: Vid):
        with self._lock:
            doomed = [k for k, v in self._map.items() if v < watermark]
            for k in doomed:
                del self._map[k]

    def __len__(self):
        with self._lock:
            return len(self._map)


class LogIndex:
    """Ordered index of posted write records, keyed by
    (parent path, vid, child path), plus a per-child chain used to
    reconstruct values that are validated but not yet applied."""

    def __init__(self):
        self._map = SortedDict()
        self._by_child: dict[bytes, list] = {}
        self._lock = threading.RLock()

    def insert_all(self, records: list["LogRecord"], vid: Vid):
        with self._lock:
            for rec in records:
                child_key = encode_key(rec.path)
                self._map[(rec.parent_key, vid, child_key)] = rec
                self._by_child.setdefault(child_key, []).append((vid, rec))

    def range(self, parent: bytes, lo_vid: Vid, hi_vid: Vid) -> list["LogRecord"]:
        """Records under `parent` with lo_vid < vid < hi_vid."""
        with self._lock:
            keys = list(
                self._map.irange(
                    (parent, lo_vid + 1), (parent, hi_vid), inclusive=(True, False)
                )
            )
            return [self._map[k] for k in keys]

    def child_chain(self, child_key: bytes, lo_vid: Vid, hi_vid: Vid) -> list:
        """(vid, record) pairs for one child with lo_vid < vid < hi_vid,
        ascending."""
        with self._lock:
            chain = self._by_child.get(child_key, ())
            return [(v, r) for v, r in chain if lo_vid < v < hi_vid]

    def prune(self, watermark: Vid):
        with self._lock:
            doomed = [k for k in self._map if k[1] < watermark]
            for k in doomed:
                del self._map[k]
            for child_key in list(self._by_child):
                kept = [(v, r) for v, r in self._by_child[child_key] if v >= watermark]
                if kept:
                    self._by_child[child_key] = kept
                else:
                    del self._by_child[child_key]

    def __len__(self):
        with self._lock:
            return len(self._map)


class VidSequencer:
    """Orders write-stage entry and tracks retired vids.

    Vids are assigned contiguously at validation entry; every assigned vid
    must retire exactly once (after its batch write, or on abort) so that
    later transactions can take their write turn.
    """

    def __init__(self, start: Vid):
        self._cond = threading.Condition()
        self._next_write = start + 1
        self._early = set()

    def wait_write_turn(self, vid: Vid):
        with self._cond:
            while self._next_write != vid:
                self._cond.wait()

    def retire(self, vid: Vid):
        with self._cond:
            self._early.add(vid)
            while self._next_write in self._early:
                self._early.remove(self._next_write)
                self._next_write += 1
            self._cond.notify_all()


class GroupFlusher:
    """Group commit: one log sync covers every batch applied before it.

    flush() returns once a sync that started at or after the caller's batch
    serial has completed; concurrent callers share that sync.
    """

    def __init__(self, store: PathStore, record_groups: bool = False):
        self._store = store
        self._cond = threading.Condition()
        self._synced_serial = 0
        self._syncing = False
        self._pending_vids: list[Vid] = []
        self.record_groups = record_groups
        self.groups: list[list[Vid]] = []

    def flush(self, upto_serial: int, vid: Optional[Vid] = None):
        with self._cond:
            if vid is not None and self.record_groups:
                self._pending_vids.append(vid)
            while self._synced_serial < upto_serial:
                if self._syncing:
                    self._cond.wait()
                    continue
                self._syncing = True
                target = self._store.kv.batch_serial
                covered = self._pending_vids
                self._pending_vids = []
                self._cond.release()
                try:
                    self._store.flush_log()
                finally:
                    self._cond.acquire()
                    self._syncing = False
                    self._cond.notify_all()
                self._synced_serial = max(self._synced_serial, target)
                if self.record_groups and covered:
                    self.groups.append(covered)


class TransactionManager:
    """Session registry, preprocessing, and the two-stage commit pipeline."""

    def __init__(
        self,
        store: PathStore,
        scheme_factory,
        workers_validate: int = 4,
        workers_write: int = 4,
        lock_timeout: float = 0.1,
        recorder=None,
        record_flush_groups: bool = False,
    ):
        self.store = store
        self.version_map = VersionMap()
        self.log_index = LogIndex()
        self.recorder = recorder
        self.lock_timeout = lock_timeout
        self.workers_validate = max(1, workers_validate)
        self.workers_write = max(1, workers_write)
        self._pool: Optional[ThreadPoolExecutor] = None
        self._pool_lock = threading.Lock()

        applied = store.applied_vid
        self._read_vid = applied
        self._read_vid_lock = threading.Lock()
        self._vid_counter = itertools.count(applied + 1)
        self._vid_lock = threading.Lock()
        self.sequencer = VidSequencer(applied)
        self.flusher = GroupFlusher(store, record_groups=record_flush_groups)

        self._validation_lock = threading.Lock()
        self._image_lock = threading.RLock()

        self._sessions: dict[int, TxnSession] = {}
        self._sessions_lock = threading.Lock()
        self._txn_ids = itertools.count(1)

        self.scheme = scheme_factory(self)
        self.failed = False

    # -- sessions ---------------------------------------------------------

    @property
    def read_vid(self) -> Vid:
        return self._read_vid

    def start_transaction(self, mode: str = "read_write") -> TxnSession:
        if mode not in ("read_only", "read_write"):
            raise ValueError(f"unknown transaction mode: {mode}")
        if mode == "read_write" and (self.failed or self.store.kv.failed):
            raise EngineReadOnly("engine is in read-only failure mode")
        txn = TxnSession(next(self._txn_ids), mode, self._read_vid)
        if mode == "read_write":
            with self._sessions_lock:
                self._sessions[txn.txn_id] = txn
        return txn

    def get_session(self, txn_id: int) -> TxnSession:
        with self._sessions_lock:
            txn = self._sessions.get(txn_id)
        if txn is None:
            raise CatalogError(f"unknown transaction id {txn_id}")
        return txn

    def active_sessions(self) -> int:
        with self._sessions_lock:
            return len(self._sessions)

    def abort(self, txn: TxnSession):
        self._finish(txn, committed=False)

    def _finish(self, txn: TxnSession, committed: bool):
        txn.state = "committed" if committed else "aborted"
        with self._sessions_lock:
            self._sessions.pop(txn.txn_id, None)
        self.scheme.on_finish(txn, committed)

    # -- preprocessing ------------------------------------------------------

    def preprocess(self, txn: TxnSession, write_ops: list[WriteOp]) -> list[LogRecord]:
        """Check write-set preconditions against the latest committed state
        and expand removes over the full visible descendant set."""
        now = self._read_vid
        records: list[LogRecord] = []
        targeted: set[Path] = set()
        pending_inner: set[Path] = set()  # inner objects this write set creates

        def claim(path: Path):
            if path in targeted:
                raise PreconditionFailed("duplicate-path", str(path))
            targeted.add(path)

        def parent_ok(parent: Optional[Path]) -> bool:
            if parent is None or parent in pending_inner:
                return True
            return self.store.inner_exists(parent, now)

        for op in write_ops:
            parent = op.path.parent()
            claim(op.path)
            if op.kind == WriteKind.ADD:
                self._check_addable(op.path, now)
                if not parent_ok(parent):
                    raise PreconditionFailed("parent-missing", str(op.path))
                if not op.leaf:
                    pending_inner.add(op.path)
                records.append(
                    LogRecord(parent, op.path, WriteKind.ADD, op.leaf, new_doc=op.value)
                )
            elif op.kind == WriteKind.UPDATE:
                leaf_entry = self.store.leaf_entry(op.path)
                if op.leaf or leaf_entry is not None:
                    raise PreconditionFailed("leaf-immutable", str(op.path))
                if not self.store.inner_exists(op.path, now) and not parent_ok(parent):
                    # upsert becomes a create; the parent must exist
                    raise PreconditionFailed("parent-missing", str(op.path))
                pending_inner.add(op.path)
                records.append(
                    LogRecord(parent, op.path, WriteKind.UPDATE, False, new_doc=op.value)
                )
            elif op.kind == WriteKind.REMOVE:
                records.extend(self._expand_remove(txn, op.path, parent, now))
            elif op.kind == WriteKind.MERGE:
                leaf_entry = self.store.leaf_entry(op.path)
                if leaf_entry is not None and leaf_entry.visible_at(now):
                    raise PreconditionFailed("leaf-immutable", str(op.path))
                if not self.store.inner_exists(op.path, now):
                    raise PreconditionFailed("target-missing", str(op.path))
                records.append(
                    LogRecord(parent, op.path, WriteKind.MERGE, False, delta=op.value)
                )
            elif op.kind == WriteKind.ADD_ALIAS:
                self._check_addable(op.path, now)
                if not parent_ok(parent):
                    raise PreconditionFailed("parent-missing", str(op.path))
                primary = self.store.leaf_entry(op.value)
                if primary is None or primary.primary is not None:
                    raise PreconditionFailed("alias-primary-missing", str(op.value))
                records.append(
                    LogRecord(
                        parent, op.path, WriteKind.ADD_ALIAS, True, alias_primary=op.value
                    )
                )
            else:  # pragma: no cover
                raise PreconditionFailed("malformed-write", str(op.path))
        return records

    def _check_addable(self, path: Path, now: Vid):
        if self.store.inner_exists(path, now):
            raise PreconditionFailed("duplicate-path", str(path))
        if self.store.leaf_entry(path) is not None:
            # A tombstoned leaf slot stays consumed: the leaf store keeps one
            # validity interval per path.
            raise PreconditionFailed("duplicate-path", str(path))

    def _expand_remove(self, txn, path: Path, parent, now: Vid) -> list[LogRecord]:
        if self.store.inner_exists(path, now):
            records = [
                LogRecord(parent, path, WriteKind.REMOVE, False, is_remove_target=True)
            ]
            # A wildcard scan entry per inner node in the subtree catches
            # children added concurrently after this expansion; a pessimistic
            # scheme locks each expanded descendant instead.
            txn.scan_set.append(ScanEntry(path, Wildcard(), None, txn.read_vid))
            for hit in self.store.scan_subtree(path, now):
                self.scheme.on_lock(txn, hit.path, "X")
                records.append(
                    LogRecord(hit.path.parent(), hit.path, WriteKind.REMOVE, hit.is_leaf)
                )
                if not hit.is_leaf:
                    txn.scan_set.append(ScanEntry(hit.path, Wildcard(), None, txn.read_vid))
            return records
        entry = self.store.leaf_entry(path)
        if entry is not None and entry.visible_at(now):
            return [LogRecord(parent, path, WriteKind.REMOVE, True, is_remove_target=True)]
        raise PreconditionFailed("target-missing", str(path))

    # -- images --------------------------------------------------------------

    def ensure_images(self, rec: LogRecord):
        """Construct and cache the record's before/after images.

        The before image is the object's exact value at commit_vid - 1,
        reconstructed from the applied store state plus the chain of posted
        but not yet applied records for the same child.
        """
        if rec.images_ready:
            return
        with self._image_lock:
            if rec.images_ready:
                return
            before = self._value_just_before(rec.path, rec.vid, rec.is_leaf)
            self._finalize_images(rec, before)

    def _finalize_images(self, rec: LogRecord, before):
        rec.before = before
        if rec.kind == WriteKind.REMOVE:
            rec.after = None
        elif rec.kind == WriteKind.MERGE:
            if before is None:
                raise PreconditionFailed("target-missing", str(rec.path))
            rec.after = apply_delta(before, rec.delta)
        elif rec.kind == WriteKind.ADD_ALIAS:
            entry = self.store.leaf_entry(rec.alias_primary)
            rec.after = entry.doc if entry is not None else None
        else:
            rec.after = rec.new_doc
        rec.images_ready = True

    def _value_just_before(self, path: Path, vid: Vid, is_leaf: bool):
        """Exact object value at vid - 1. Values from transactions whose
        batches are not yet applied come from the LogIndex child chain; a
        posted record always commits, so the chain is authoritative."""
        applied = self.store.applied_vid
        target = vid - 1
        if applied >= target:
            if is_leaf:
                return self.store.resolve_leaf(path, target)
            return self.store.get_inner(path, target)
        if is_leaf:
            value = self.store.resolve_leaf(path, applied)
        else:
            value = self.store.get_inner(path, applied)
        for _, chain_rec in self.log_index.child_chain(encode_key(path), applied, vid):
            if chain_rec.kind == WriteKind.REMOVE:
                value = None
            elif chain_rec.kind == WriteKind.MERGE:
                # readied when its owner validated
                self.ensure_images(chain_rec)
                value = chain_rec.after
            elif chain_rec.kind == WriteKind.ADD_ALIAS:
                self.ensure_images(chain_rec)
                value = chain_rec.after
            else:
                value = chain_rec.new_doc
        return value

    def _leaf_slot_taken(self, path: Path, vid: Vid) -> bool:
        if self.store.leaf_entry(path) is not None:
            return True
        chain = self.log_index.child_chain(encode_key(path), 0, vid)
        return any(rec.is_leaf for _, rec in chain)

    # -- commit pipeline -------------------------------------------------------

    def commit(self, txn: TxnSession, write_ops: list[WriteOp]) -> Vid:
        """Full commit path: preprocess, validate, write, group-flush,
        publish. Raises PreconditionFailed or ConflictAbort; either way the
        session is finished."""
        if txn.state != "active":
            raise CatalogError(f"transaction {txn.txn_id} is {txn.state}")
        if txn.mode != "read_write":
            raise CatalogError("read-only transactions cannot commit writes")
        if self.failed or self.store.kv.failed:
            self._finish(txn, committed=False)
            raise EngineReadOnly("engine is in read-only failure mode")
        if not write_ops:
            self._finish(txn, committed=True)
            return self._read_vid

        # Pessimistic schemes lock from the raw write set first, so the
        # remove expansion below runs under full lock protection.
        try:
            self.scheme.before_commit(txn, write_ops)
        except ConflictAbort:
            self._finish(txn, committed=False)
            raise

        try:
            records = self.preprocess(txn, write_ops)
        except PreconditionFailed:
            self._finish(txn, committed=False)
            raise

        vid = self._run_validation_stage(txn, records)
        return self._run_write_stage(txn, records, vid)

    def _assign_vid(self) -> Vid:
        with self._vid_lock:
            return next(self._vid_counter)

    def _run_validation_stage(self, txn: TxnSession, records) -> Vid:
        with self._validation_lock:
            vid = self._assign_vid()
            txn.commit_vid = vid
            for rec in records:
                rec.vid = vid
            try:
                self.scheme.on_validate(txn)
                self._recheck(records, vid)
            except (ConflictAbort, PreconditionFailed):
                self.sequencer.retire(vid)
                self._finish(txn, committed=False)
                raise
            if self.scheme.uses_log_structures:
                self.log_index.insert_all(records, vid)
                self.version_map.bump_all({rec.parent_key for rec in records}, vid)
        return vid

    def _recheck(self, records, vid: Vid):
        """Re-validate existence preconditions against the exact state at
        vid - 1 (applied store plus pending record chains); preprocessing
        only saw an earlier snapshot. Also constructs merge images, so a
        merge whose target changed type aborts here, before installation.
        """
        own_inner = {
            rec.path
            for rec in records
            if not rec.is_leaf and rec.kind in (WriteKind.ADD, WriteKind.UPDATE)
        }

        def parent_live(parent: Optional[Path]) -> bool:
            if parent is None or parent in own_inner:
                return True
            return self._value_just_before(parent, vid, False) is not None

        for rec in records:
            if rec.kind in (WriteKind.ADD, WriteKind.ADD_ALIAS):
                if self._value_just_before(rec.path, vid, False) is not None:
                    raise PreconditionFailed("duplicate-path", str(rec.path))
                if self._leaf_slot_taken(rec.path, vid):
                    raise PreconditionFailed("duplicate-path", str(rec.path))
                if not parent_live(rec.parent):
                    raise PreconditionFailed("parent-missing", str(rec.path))
                if rec.kind == WriteKind.ADD_ALIAS:
                    primary = self.store.leaf_entry(rec.alias_primary)
                    if primary is None or primary.primary is not None:
                        raise PreconditionFailed(
                            "alias-primary-missing", str(rec.alias_primary)
                        )
                    self._finalize_images(rec, None)
            elif rec.kind == WriteKind.UPDATE:
                if self._value_just_before(rec.path, vid, False) is None:
                    if not parent_live(rec.parent):
                        raise PreconditionFailed("parent-missing", str(rec.path))
            elif rec.kind == WriteKind.MERGE:
                before = self._value_just_before(rec.path, vid, False)
                if before is None:
                    raise PreconditionFailed("target-missing", str(rec.path))
                try:
                    self._finalize_images(rec, before)
                except PreconditionDeltaError as exc:
                    raise PreconditionFailed("delta-mismatch", str(exc)) from exc
            elif rec.kind == WriteKind.REMOVE and rec.is_remove_target:
                if self._value_just_before(rec.path, vid, rec.is_leaf) is None:
                    raise PreconditionFailed("target-missing", str(rec.path))

    def _run_write_stage(self, txn: TxnSession, records, vid: Vid) -> Vid:
        self.sequencer.wait_write_turn(vid)
        try:
            resolved = self._resolve(records)
            self.store.apply_batch(resolved, vid)
            serial = self.store.kv.batch_serial
        except BaseException:
            self.failed = True
            self.sequencer.retire(vid)
            self._finish(txn, committed=False)
            raise
        self.sequencer.retire(vid)
        try:
            self.flusher.flush(serial, vid)
        except StorageError:
            self.failed = True
            self._finish(txn, committed=False)
            raise
        self._publish(vid)
        if self.recorder is not None:
            for rec in records:
                self.ensure_images(rec)
            self.recorder.on_commit(txn, records, vid)
        self._finish(txn, committed=True)
        return vid

    def _publish(self, vid: Vid):
        with self._read_vid_lock:
            if vid > self._read_vid:
                self._read_vid = vid

    def _resolve(self, records) -> list:
        """Turn log records into store write records, evaluating merge final
        values; at this point the prior state is fully applied."""
        resolved = []
        for rec in records:
            if rec.kind == WriteKind.ADD and rec.is_leaf:
                resolved.append(PutLeaf(rec.path, rec.new_doc))
            elif rec.kind == WriteKind.ADD_ALIAS:
                resolved.append(PutLeafAlias(rec.path, rec.alias_primary))
            elif rec.kind in (WriteKind.ADD, WriteKind.UPDATE):
                resolved.append(PutInner(rec.path, rec.new_doc))
            elif rec.kind == WriteKind.MERGE:
                self.ensure_images(rec)
                resolved.append(PutInner(rec.path, rec.after))
            elif rec.kind == WriteKind.REMOVE and rec.is_leaf:
                resolved.append(TombstoneLeaf(rec.path))
            elif rec.kind == WriteKind.REMOVE:
                resolved.append(DeleteInner(rec.path))
        return resolved

    # -- garbage collection -----------------------------------------------------

    def watermark(self) -> Vid:
        with self._sessions_lock:
            vids = [s.read_vid for s in self._sessions.values() if s.state == "active"]
        vids.append(self._read_vid)
        return min(vids)

    def gc_tick(self) -> Vid:
        """Prune validation structures below the watermark; entries at or
        above it are always retained."""
        wm = self.watermark()
        self.log_index.prune(wm)
        self.version_map.prune(wm)
        return wm

    # -- worker partitioning -----------------------------------------------------

    def partitioned(self, items: list, workers: int) -> list[list]:
        """Hash-partition items by parent path so any conflicting pair lands
        in the same partition."""
        if workers <= 1 or len(items) <= 1:
            return [items] if items else []
        buckets: list[list] = [[] for _ in range(workers)]
        for item in items:
            key = item.parent_key if hasattr(item, "parent_key") else parent_key(item.parent)
            buckets[hash(key) % workers].append(item)
        return [b for b in buckets if b]

    def run_partitions(self, func, partitions: list[list]):
        if len(partitions) <= 1:
            for part in partitions:
                func(part)
            return
        pool = self._worker_pool()
        futures = [pool.submit(func, part) for part in partitions]
        error = None
        for fut in futures:
            try:
                fut.result()
            except BaseException as exc:  # first failure wins, rest drain
                if error is None:
                    error = exc
        if error is not None:
            raise error

    def _worker_pool(self) -> ThreadPoolExecutor:
        with self._pool_lock:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(
                    max_workers=max(self.workers_validate, self.workers_write),
                    thread_name_prefix="commit-worker",
                )
            return self._pool

    def close(self):
        with self._pool_lock:
            if self._pool is not None:
                self._pool.shutdown(wait=False)
                self._pool = None
