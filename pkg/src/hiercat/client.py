"""Blocking client for the wire protocol; used by the CLI and tests."""

from __future__ import annotations

import itertools
import socket
from typing import Iterator, Optional

from .wire import WireError, recv_frame, send_frame


class CatalogClient:
    def __init__(self, host: str = "127.0.0.1", port: int = 7421, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._ids = itertools.count(1)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- plumbing ------------------------------------------------------------

    def _request(self, op: str, **payload) -> dict:
        request_id = next(self._ids)
        send_frame(self._sock, {"request_id": request_id, "op": op, **payload})
        response = self._recv_for(request_id)
        return self._unwrap(response)

    def _recv_for(self, request_id: int) -> dict:
        while True:
            frame = recv_frame(self._sock)
            if frame is None:
                raise WireError("internal", "connection closed by server")
            if frame.get("request_id") in (request_id, None):
                return frame

    @staticmethod
    def _unwrap(frame: dict) -> dict:
        if frame.get("ok") is False:
            error = frame.get("error") or {}
            raise WireError(error.get("code", "internal"), error.get("message", ""))
        return frame

    # -- operations -----------------------------------------------------------

    def start_transaction(self, mode: str = "read_only") -> dict:
        return self._request("start_transaction", mode=mode)

    def query(
        self,
        text: str,
        txn_id: Optional[int] = None,
        vid: Optional[int] = None,
        snapshot: Optional[str] = None,
    ) -> Iterator[dict]:
        """Stream result rows ({"path": ..., "value": ...}) for a query."""
        request_id = next(self._ids)
        payload = {"request_id": request_id, "op": "execute_query", "query": text}
        if txn_id is not None:
            payload["txn_id"] = txn_id
        if vid is not None:
            payload["vid"] = vid
        if snapshot is not None:
            payload["snapshot"] = snapshot
        send_frame(self._sock, payload)
        while True:
            frame = self._unwrap(self._recv_for(request_id))
            yield from frame.get("rows", ())
            if frame.get("done"):
                return

    def query_chunks(self, text: str, **kwargs) -> Iterator[dict]:
        """Raw chunk frames, for callers that care about the framing."""
        request_id = next(self._ids)
        payload = {"request_id": request_id, "op": "execute_query", "query": text}
        payload.update({k: v for k, v in kwargs.items() if v is not None})
        send_frame(self._sock, payload)
        while True:
            frame = self._unwrap(self._recv_for(request_id))
            yield frame
            if frame.get("done"):
                return

    def commit(self, write_set: list, txn_id: Optional[int] = None) -> int:
        payload = {"write_set": write_set}
        if txn_id is not None:
            payload["txn_id"] = txn_id
        return self._request("commit", **payload)["committed_vid"]

    def snapshot(self, name: str, vid: Optional[int] = None) -> dict:
        payload = {"name": name}
        if vid is not None:
            payload["vid"] = vid
        return self._request("snapshot", **payload)

    def clone(self, src: str, dest: str, vid: Optional[int] = None) -> int:
        payload = {"src": src, "dest": dest}
        if vid is not None:
            payload["vid"] = vid
        return self._request("clone", **payload)["committed_vid"]

    def status(self) -> dict:
        return self._request("status")
