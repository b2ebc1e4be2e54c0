"""Wire protocol: length-prefixed JSON frames over one TCP connection.

Each frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
envelope. Requests carry a per-connection unique request_id which every
response (including each streamed result chunk) echoes back.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Optional

_LEN = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024

OPS = ("start_transaction", "execute_query", "commit", "snapshot", "clone", "status")
ERROR_CODES = ("syntax", "precondition", "conflict", "not_found", "internal")


class WireError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code if code in ERROR_CODES else "internal"
        self.message = message


def send_frame(sock: socket.socket, obj: dict):
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise WireError("internal", "frame too large")
    sock.sendall(_LEN.pack(len(payload)) + payload)


def recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> Optional[dict]:
    """Next frame as a dict, None on clean EOF.

    Raises WireError on an over-long or undecodable frame; the connection
    survives a malformed JSON payload.
    """
    header = recv_exact(sock, _LEN.size)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_FRAME:
        raise WireError("internal", "frame too large")
    payload = recv_exact(sock, length)
    if payload is None:
        return None
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WireError("syntax", f"malformed frame: {exc}") from exc
    if not isinstance(obj, dict):
        raise WireError("syntax", "frame must be a JSON object")
    return obj


def error_body(code: str, message: str) -> dict:
    return {"code": code if code in ERROR_CODES else "internal", "message": message}
