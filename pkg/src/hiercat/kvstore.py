"""Embedded ordered key-value store with write-ahead logging.

Keeps each keyspace in an in-memory sorted map and makes batches durable
through an append-only, CRC-checked log that is replayed on open. Sync is
decoupled from batch application so callers can group-commit: one fsync may
cover any number of previously applied batches.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from typing import Iterable, Optional

from sortedcontainers import SortedDict

from .errors import StorageError

KEYSPACES = ("obj", "hist", "leaf", "meta")
_KS_INDEX = {name: i for i, name in enumerate(KEYSPACES)}

_FRAME_HEADER = struct.Struct(">II")  # payload length, crc32
_OP_HEADER = struct.Struct(">BBI")  # keyspace, op, key length
_LEN = struct.Struct(">I")

_OP_PUT = 1
_OP_DELETE = 0

LOG_FILENAME = "catalog.wal"


class RWLock:
    """Many readers or one writer; writers wait for in-flight readers."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class ReadLocked:
    def __init__(self, lock):
        self._lock = lock

    def __enter__(self):
        self._lock.acquire_read()

    def __exit__(self, *exc):
        self._lock.release_read()


class KVStore:
    """Ordered maps with atomic batched writes and WAL recovery.

    With data_dir=None the store is purely in-memory; sync becomes a no-op
    but is still counted, so group-commit behavior stays observable.
    """

    def __init__(self, data_dir: Optional[str] = None):
        self._trees = {name: SortedDict() for name in KEYSPACES}
        self._lock = RWLock()
        self._wal_lock = threading.Lock()
        self._wal = None
        self.sync_count = 0
        self.batch_serial = 0
        self.failed = False
        self.data_dir = data_dir
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
            path = os.path.join(data_dir, LOG_FILENAME)
            self._replay(path)
            self._wal = open(path, "ab")

    # -- recovery -----------------------------------------------------

    def _replay(self, path: str):
        if not os.path.exists(path):
            return
        with open(path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos + _FRAME_HEADER.size <= len(data):
            length, crc = _FRAME_HEADER.unpack_from(data, pos)
            start = pos + _FRAME_HEADER.size
            end = start + length
            if end > len(data):
                break  # torn tail frame from a crash
            payload = data[start:end]
            if zlib.crc32(payload) != crc:
                break
            self._apply_payload(payload)
            pos = end

    def _apply_payload(self, payload: bytes):
        (count,) = _LEN.unpack_from(payload, 0)
        pos = _LEN.size
        for _ in range(count):
            ks_idx, op, klen = _OP_HEADER.unpack_from(payload, pos)
            pos += _OP_HEADER.size
            key = payload[pos : pos + klen]
            pos += klen
            tree = self._trees[KEYSPACES[ks_idx]]
            if op == _OP_PUT:
                (vlen,) = _LEN.unpack_from(payload, pos)
                pos += _LEN.size
                tree[key] = payload[pos : pos + vlen]
                pos += vlen
            else:
                tree.pop(key, None)

    # -- reads ----------------------------------------------------------

    def get(self, keyspace: str, key: bytes) -> Optional[bytes]:
        with ReadLocked(self._lock):
            return self._trees[keyspace].get(key)

    def scan(self, keyspace: str, lo: bytes, hi: bytes) -> list[tuple[bytes, bytes]]:
        """All (key, value) pairs with lo <= key < hi, materialized so the
        caller never iterates a live tree while writers mutate it."""
        tree = self._trees[keyspace]
        with ReadLocked(self._lock):
            keys = list(tree.irange(lo, hi, inclusive=(True, False)))
            return [(k, tree[k]) for k in keys]

    def first(self, keyspace: str, lo: bytes, hi: bytes) -> Optional[tuple[bytes, bytes]]:
        tree = self._trees[keyspace]
        with ReadLocked(self._lock):
            for key in tree.irange(lo, hi, inclusive=(True, False)):
                return key, tree[key]
        return None

    def count(self, keyspace: str) -> int:
        with ReadLocked(self._lock):
            return len(self._trees[keyspace])

    # -- writes ---------------------------------------------------------

    def write_batch(self, ops: Iterable[tuple[str, bytes, Optional[bytes]]]):
        """Atomically apply (keyspace, key, value-or-None) operations.

        The batch is logged as a single frame before touching the trees, so
        recovery sees either the whole batch or none of it.
        """
        ops = list(ops)
        if self.failed:
            raise StorageError("store is in read-only failure mode")
        payload = self._encode_payload(ops)
        with self._wal_lock:
            if self._wal is not None:
                frame = _FRAME_HEADER.pack(len(payload), zlib.crc32(payload)) + payload
                self._wal.write(frame)
                self._wal.flush()
        self._lock.acquire_write()
        try:
            for keyspace, key, value in ops:
                tree = self._trees[keyspace]
                if value is None:
                    tree.pop(key, None)
                else:
                    tree[key] = value
            self.batch_serial += 1
        finally:
            self._lock.release_write()

    @staticmethod
    def _encode_payload(ops) -> bytes:
        out = bytearray(_LEN.pack(len(ops)))
        for keyspace, key, value in ops:
            op = _OP_DELETE if value is None else _OP_PUT
            out += _OP_HEADER.pack(_KS_INDEX[keyspace], op, len(key))
            out += key
            if value is not None:
                out += _LEN.pack(len(value))
                out += value
        return bytes(out)

    def sync(self):
        """Force logged batches to stable storage. Counted even in memory
        mode so tests can observe group-commit structure."""
        self.sync_count += 1
        if self._wal is None:
            return
        try:
            with self._wal_lock:
                self._wal.flush()
                os.fsync(self._wal.fileno())
        except OSError as exc:
            self.failed = True
            raise StorageError(f"log sync failed: {exc}") from exc

    def close(self):
        if self._wal is not None:
            with self._wal_lock:
                self._wal.flush()
                os.fsync(self._wal.fileno())
                self._wal.close()
                self._wal = None
