"""Versioned hierarchical object storage.

Three keyspaces implement the catalog mappings:

- "obj":  path -> (prev_start_vid, cur_vid, value); the current version of
          every live non-leaf object.
- "hist": (path, start_vid desc) -> (end_vid, value); past non-leaf versions,
          each valid over [start_vid, end_vid).
- "leaf": path -> (create_vid, tombstone_vid, value | primary path); leaf
          objects are immutable and may alias a primary record one hop away.

Reads are multi-version: any vid at or below the last applied commit resolves
to a consistent snapshot. Writes arrive as pre-validated batches, exactly one
in flight at a time, with strictly increasing commit vids.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from typing import Iterable, Optional

from .document import Document
from .errors import CorruptionError, StorageError
from .kvstore import KVStore
from .paths import (
    Path,
    Vid,
    child_key_range,
    decode_history_key,
    decode_key,
    descendant_key_range,
    encode_history_key,
    encode_key,
    path_history_range,
)

_VID = struct.Struct(">Q")
_OBJ_HEADER = struct.Struct(">QQ")  # prev_start_vid, cur_vid
_LEAF_HEADER = struct.Struct(">QQB")  # create_vid, tombstone_vid, kind

_LEAF_PRIMARY = 0
_LEAF_ALIAS = 1

_APPLIED_KEY = b"applied_vid"


def _id_order(object_id: str, literal) -> Optional[int]:
    """Three-way compare of an object id against a bound literal.

    Numeric literals compare numerically when the id parses as an integer
    (partition ids like "005"); string literals compare by code point.
    Returns None when the id cannot be compared with the literal.
    """
    if isinstance(literal, str):
        return (object_id > literal) - (object_id < literal)
    try:
        as_int = int(object_id)
    except ValueError:
        return None
    return (as_int > literal) - (as_int < literal)


@dataclass(frozen=True)
class IdBounds:
    """Child object-id interval, each side an optional (value, inclusive)."""

    low: Optional[tuple] = None
    high: Optional[tuple] = None

    def admits(self, object_id: str) -> bool:
        if self.low is not None:
            value, inclusive = self.low
            order = _id_order(object_id, value)
            if order is None or order < 0 or (order == 0 and not inclusive):
                return False
        if self.high is not None:
            value, inclusive = self.high
            order = _id_order(object_id, value)
            if order is None or order > 0 or (order == 0 and not inclusive):
                return False
        return True

    def key_narrowing(self):
        """(low, high) usable as raw key-range restrictions.

        Only string bounds order the same way as encoded keys; numeric
        bounds are enforced by `admits` on the scanned ids instead.
        """
        low = self.low if self.low is not None and isinstance(self.low[0], str) else None
        high = self.high if self.high is not None and isinstance(self.high[0], str) else None
        return low, high


@dataclass
class ChildHit:
    """One visible child produced by a range scan."""

    path: Path
    doc: Document
    version_vid: Vid
    is_leaf: bool
    alias_of: Optional[Path] = None


# Resolved write records consumed by apply_batch. Merge deltas are evaluated
# by the transaction layer before reaching the store.


@dataclass
class PutInner:
    path: Path
    doc: Document


@dataclass
class DeleteInner:
    path: Path


@dataclass
class PutLeaf:
    path: Path
    doc: Document


@dataclass
class PutLeafAlias:
    path: Path
    primary: Path


@dataclass
class TombstoneLeaf:
    path: Path


@dataclass
class LeafEntry:
    create_vid: Vid
    tombstone_vid: Vid
    doc: Optional[Document]
    primary: Optional[Path]

    def visible_at(self, at: Vid) -> bool:
        return self.create_vid <= at and (
            self.tombstone_vid == 0 or at < self.tombstone_vid
        )


class PathStore:
    def __init__(self, data_dir: Optional[str] = None, kv: Optional[KVStore] = None):
        self.kv = kv if kv is not None else KVStore(data_dir)
        raw = self.kv.get("meta", _APPLIED_KEY)
        self._applied_vid = _VID.unpack(raw)[0] if raw else 0
        self._write_lock = threading.Lock()

    @property
    def applied_vid(self) -> Vid:
        return self._applied_vid

    @property
    def sync_count(self) -> int:
        return self.kv.sync_count

    # -- point reads ----------------------------------------------------

    def get_inner_version(self, path: Path, at: Vid):
        """(document, start_vid) of the version visible at `at`, or None."""
        raw = self.kv.get("obj", encode_key(path))
        if raw is not None:
            prev_start, cur_vid = _OBJ_HEADER.unpack_from(raw)
            if cur_vid <= at:
                return Document.decode(raw[_OBJ_HEADER.size :]), cur_vid
        return self._history_lookup(path, at)

    def get_inner(self, path: Path, at: Vid) -> Optional[Document]:
        found = self.get_inner_version(path, at)
        return found[0] if found else None

    def _history_lookup(self, path: Path, at: Vid):
        lo, hi = path_history_range(path)
        # Newest versions sort first; stop at the first interval that starts
        # at or before `at`.
        for key, raw in self.kv.scan("hist", lo, hi):
            _, start_vid = decode_history_key(key)
            if start_vid <= at:
                end_vid = _VID.unpack_from(raw)[0]
                if at < end_vid:
                    return Document.decode(raw[_VID.size :]), start_vid
                return None
        return None

    def inner_exists(self, path: Path, at: Vid) -> bool:
        return self.get_inner_version(path, at) is not None

    def leaf_entry(self, path: Path) -> Optional[LeafEntry]:
        raw = self.kv.get("leaf", encode_key(path))
        return self._decode_leaf(raw) if raw is not None else None

    @staticmethod
    def _decode_leaf(raw: bytes) -> LeafEntry:
        create_vid, tombstone_vid, kind = _LEAF_HEADER.unpack_from(raw)
        body = raw[_LEAF_HEADER.size :]
        if kind == _LEAF_ALIAS:
            return LeafEntry(create_vid, tombstone_vid, None, decode_key(body))
        return LeafEntry(create_vid, tombstone_vid, Document.decode(body), None)

    def resolve_leaf(self, path: Path, at: Vid) -> Optional[Document]:
        """Leaf document visible at `at`, following at most one alias hop.

        Alias visibility comes from the alias record's own vids; the value
        always comes from the primary record.
        """
        entry = self.leaf_entry(path)
        if entry is None or not entry.visible_at(at):
            return None
        return self._leaf_payload(entry, path)

    def _leaf_payload(self, entry: LeafEntry, path: Path) -> Document:
        if entry.primary is None:
            return entry.doc
        primary_entry = self.leaf_entry(entry.primary)
        if primary_entry is None:
            raise CorruptionError(f"dangling leaf alias {path} -> {entry.primary}")
        if primary_entry.primary is not None:
            raise CorruptionError(f"alias chain at {path} -> {entry.primary}")
        return primary_entry.doc

    def object_exists(self, path: Path, at: Vid) -> bool:
        if self.inner_exists(path, at):
            return True
        entry = self.leaf_entry(path)
        return entry is not None and entry.visible_at(at)

    # -- range scans ------------------------------------------------------

    def scan_children(
        self,
        parent: Optional[Path],
        at: Vid,
        bounds: Optional[IdBounds] = None,
    ) -> list[ChildHit]:
        """All children of `parent` visible at `at`, inner and leaf merged in
        key order. One range-scan seek per keyspace per call; historical
        versions of individual children fall back to point lookups.
        """
        low = high = None
        if bounds is not None:
            low, high = bounds.key_narrowing()
        lo, hi = child_key_range(parent, low, high)
        return self._scan_range(lo, hi, at, bounds)

    def _scan_range(self, lo, hi, at, bounds=None) -> list[ChildHit]:
        current = at >= self._applied_vid
        snap_items = self.kv.scan("obj", lo, hi)
        leaf_items = self.kv.scan("leaf", lo, hi)
        hist_groups = {} if current else self._group_history(self.kv.scan("hist", lo, hi))

        inner_hits = []
        seen = set()
        for key, raw in snap_items:
            seen.add(key)
            hit = self._resolve_inner(key, raw, hist_groups.get(key), at)
            if hit is not None:
                inner_hits.append((key, hit))
        for key, versions in hist_groups.items():
            if key in seen:
                continue
            hit = self._resolve_inner(key, None, versions, at)
            if hit is not None:
                inner_hits.append((key, hit))
        inner_hits.sort(key=lambda kv_: kv_[0])

        leaf_hits = []
        for key, raw in leaf_items:
            entry = self._decode_leaf(raw)
            if not entry.visible_at(at):
                continue
            path = decode_key(key)
            doc = self._leaf_payload(entry, path)
            leaf_hits.append(
                (key, ChildHit(path, doc, entry.create_vid, True, entry.primary))
            )

        merged = _merge_by_key(inner_hits, leaf_hits)
        if bounds is not None:
            merged = [h for h in merged if bounds.admits(h.path.object_id)]
        return merged

    @staticmethod
    def _group_history(items):
        groups: dict[bytes, list] = {}
        for key, raw in items:
            path_key = key[:-9]  # strip separator + inverted vid
            groups.setdefault(path_key, []).append((key, raw))
        return groups

    def _resolve_inner(self, key, snap_raw, versions, at) -> Optional[ChildHit]:
        if snap_raw is not None:
            _, cur_vid = _OBJ_HEADER.unpack_from(snap_raw)
            if cur_vid <= at:
                path = decode_key(key)
                return ChildHit(path, Document.decode(snap_raw[_OBJ_HEADER.size :]), cur_vid, False)
        path = decode_key(key)
        if versions is not None:
            for hist_key, raw in versions:  # newest first
                _, start_vid = decode_history_key(hist_key)
                if start_vid <= at:
                    end_vid = _VID.unpack_from(raw)[0]
                    if at < end_vid:
                        return ChildHit(path, Document.decode(raw[_VID.size :]), start_vid, False)
                    return None
            return None
        found = self._history_lookup(path, at)
        if found is None:
            return None
        doc, start_vid = found
        return ChildHit(path, doc, start_vid, False)

    def scan_subtree(self, root: Path, at: Vid) -> list[ChildHit]:
        """Every visible descendant of `root` at `at`, shallowest first.

        Stops at the first depth with no visible entries; hierarchy writes
        guarantee no visible object ever lacks a visible parent chain.
        """
        hits: list[ChildHit] = []
        depth = root.depth + 1
        while depth <= 0xFFFF:
            lo, hi = descendant_key_range(root, depth)
            level = self._scan_range(lo, hi, at)
            if not level:
                break
            hits.extend(level)
            depth += 1
        return hits

    # -- writes -----------------------------------------------------------

    def apply_batch(self, writes: Iterable, commit_vid: Vid):
        """Atomically install one transaction's resolved writes.

        Old snapshot values move into the history keyspace with their
        validity interval closed at `commit_vid`; leaf payloads are never
        rewritten, only tombstoned.
        """
        with self._write_lock:
            if commit_vid <= self._applied_vid:
                raise StorageError(
                    f"commit vid {commit_vid} not above applied {self._applied_vid}"
                )
            ops: list[tuple[str, bytes, Optional[bytes]]] = []
            for write in writes:
                ops.extend(self._ops_for(write, commit_vid))
            ops.append(("meta", _APPLIED_KEY, _VID.pack(commit_vid)))
            self.kv.write_batch(ops)
            self._applied_vid = commit_vid

    def _ops_for(self, write, commit_vid: Vid):
        if isinstance(write, PutInner):
            key = encode_key(write.path)
            old = self.kv.get("obj", key)
            ops = []
            if old is not None:
                _, old_cur = _OBJ_HEADER.unpack_from(old)
                hist_key = encode_history_key(write.path, old_cur)
                ops.append(("hist", hist_key, _VID.pack(commit_vid) + old[_OBJ_HEADER.size :]))
                prev_start = old_cur
            else:
                prev_start = self._newest_history_start(write.path)
            header = _OBJ_HEADER.pack(prev_start, commit_vid)
            ops.append(("obj", key, header + write.doc.encode()))
            return ops
        if isinstance(write, DeleteInner):
            key = encode_key(write.path)
            old = self.kv.get("obj", key)
            if old is None:
                return []
            _, old_cur = _OBJ_HEADER.unpack_from(old)
            hist_key = encode_history_key(write.path, old_cur)
            return [
                ("hist", hist_key, _VID.pack(commit_vid) + old[_OBJ_HEADER.size :]),
                ("obj", key, None),
            ]
        if isinstance(write, PutLeaf):
            header = _LEAF_HEADER.pack(commit_vid, 0, _LEAF_PRIMARY)
            return [("leaf", encode_key(write.path), header + write.doc.encode())]
        if isinstance(write, PutLeafAlias):
            header = _LEAF_HEADER.pack(commit_vid, 0, _LEAF_ALIAS)
            return [("leaf", encode_key(write.path), header + encode_key(write.primary))]
        if isinstance(write, TombstoneLeaf):
            key = encode_key(write.path)
            raw = self.kv.get("leaf", key)
            if raw is None:
                return []
            create_vid, _, kind = _LEAF_HEADER.unpack_from(raw)
            header = _LEAF_HEADER.pack(create_vid, commit_vid, kind)
            return [("leaf", key, header + raw[_LEAF_HEADER.size :])]
        raise TypeError(f"unknown write record: {write!r}")

    def _newest_history_start(self, path: Path) -> Vid:
        lo, hi = path_history_range(path)
        first = self.kv.first("hist", lo, hi)
        if first is None:
            return 0
        _, start_vid = decode_history_key(first[0])
        return start_vid

    def flush_log(self):
        self.kv.sync()

    def close(self):
        self.kv.close()

    # -- maintenance --------------------------------------------------------

    def prune_history(self, floor: Vid) -> int:
        """Drop history records whose validity ended at or before `floor`.

        Time travel below the floor becomes unsupported; live data and leaf
        records (possible alias targets) are never touched. Returns the
        number of records removed.
        """
        doomed = []
        for key, raw in self.kv.scan("hist", b"", b"\xff\xff"):
            end_vid = _VID.unpack_from(raw)[0]
            if end_vid <= floor:
                doomed.append(("hist", key, None))
        if doomed:
            self.kv.write_batch(doomed)
        return len(doomed)


def _merge_by_key(a: list, b: list) -> list[ChildHit]:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i][0] <= b[j][0]:
            out.append(a[i][1])
            i += 1
        else:
            out.append(b[j][1])
            j += 1
    out.extend(hit for _, hit in a[i:])
    out.extend(hit for _, hit in b[j:])
    return out
