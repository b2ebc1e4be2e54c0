"""Named snapshots and subtree clones.

A snapshot is a durable name -> vid mapping; queries addressed at the name
read the catalog exactly as of that vid forever. A clone copies the inner
objects of a subtree as of some vid and re-points its leaves through alias
records, sharing the immutable payloads instead of duplicating them.
"""

from __future__ import annotations

import struct
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .errors import NotFound, PreconditionFailed
from .paths import Path, Vid
from .store import PathStore
from .txn import ScanEntry, TxnSession, WriteKind, WriteOp

_SNAP_PREFIX = b"snapshot:"
_SNAP_VALUE = struct.Struct(">Qd")  # vid, created_at


@dataclass(frozen=True)
class SnapshotEntry:
    name: str
    vid: Vid
    created_at: float


class SnapshotRegistry:
    """Durable snapshot-name keyspace; names never change once created."""

    def __init__(self, store: PathStore):
        self._store = store
        self._lock = threading.Lock()

    @staticmethod
    def _key(name: str) -> bytes:
        return _SNAP_PREFIX + name.encode("utf-8")

    def create(self, name: str, vid: Vid, read_vid: Vid) -> SnapshotEntry:
        if not name or "/" in name or "\x00" in name:
            raise PreconditionFailed("invalid-snapshot-name", name)
        if vid > read_vid:
            raise PreconditionFailed("future-vid", f"{name}@{vid}")
        with self._lock:
            if self._store.kv.get("meta", self._key(name)) is not None:
                raise PreconditionFailed("duplicate-snapshot-name", name)
            entry = SnapshotEntry(name, vid, time.time())
            self._store.kv.write_batch(
                [("meta", self._key(name), _SNAP_VALUE.pack(vid, entry.created_at))]
            )
            self._store.kv.sync()
        return entry

    def resolve(self, name: str) -> Vid:
        raw = self._store.kv.get("meta", self._key(name))
        if raw is None:
            raise NotFound(f"unknown snapshot: {name}")
        return _SNAP_VALUE.unpack(raw)[0]

    def entries(self) -> list[SnapshotEntry]:
        out = []
        hi = _SNAP_PREFIX[:-1] + bytes([_SNAP_PREFIX[-1] + 1])
        for key, raw in self._store.kv.scan("meta", _SNAP_PREFIX, hi):
            vid, created = _SNAP_VALUE.unpack(raw)
            out.append(SnapshotEntry(key[len(_SNAP_PREFIX):].decode("utf-8"), vid, created))
        return out

    def min_pinned(self) -> Optional[Vid]:
        entries = self.entries()
        return min((e.vid for e in entries), default=None)


def build_clone_ops(
    store: PathStore,
    scheme,
    txn: TxnSession,
    src: Path,
    dest: Path,
    vid: Optional[Vid] = None,
) -> list[WriteOp]:
    """Read the source subtree and produce the clone's write set.

    Inner descendants are copied as new objects under dest; leaf descendants
    become aliases to their primary records (aliases of aliases flatten to
    the original primary). Scan entries over every inner node of the source
    subtree make the clone conflict with concurrent writes there.
    """
    from .querylang import Wildcard

    # Register the source scans first: a pessimistic scheme locks the
    # subtree here, an optimistic one validates it at commit.
    scan_at = scheme.on_scan(txn, src, Wildcard(), None)
    read_at = vid if vid is not None else scan_at
    if read_at > txn.read_vid and vid is not None:
        raise PreconditionFailed("future-vid", f"{src}@{read_at}")

    src_doc = store.get_inner(src, read_at)
    ops: list[WriteOp] = []
    if src_doc is not None:
        ops.append(WriteOp(dest, WriteKind.ADD, src_doc))
    else:
        leaf = store.leaf_entry(src)
        if leaf is None or not leaf.visible_at(read_at):
            raise PreconditionFailed("target-missing", str(src))
        primary = leaf.primary if leaf.primary is not None else src
        return [WriteOp(dest, WriteKind.ADD_ALIAS, primary)]

    if store.object_exists(dest, txn.read_vid):
        raise PreconditionFailed("duplicate-path", str(dest))
    dest_parent = dest.parent()
    if dest_parent is not None and not store.inner_exists(dest_parent, txn.read_vid):
        raise PreconditionFailed("parent-missing", str(dest))

    skip = len(src.components)
    for hit in store.scan_subtree(src, read_at):
        mapped = Path(dest.components + hit.path.components[skip:])
        if hit.is_leaf:
            primary = hit.alias_of if hit.alias_of is not None else hit.path
            ops.append(WriteOp(mapped, WriteKind.ADD_ALIAS, primary))
        else:
            ops.append(WriteOp(mapped, WriteKind.ADD, hit.doc))
            scheme.on_scan(txn, hit.path, Wildcard(), None)
    return ops
