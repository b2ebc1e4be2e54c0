"""Hierarchical object paths and their order-preserving key encoding.

Encoded keys sort first by path depth (2-byte big-endian prefix), then
lexicographically over the components joined with a 0x00 separator, so all
children of a parent occupy one contiguous key range. History keys append
an order-inverted version id so newer versions sort first.
"""

from __future__ import annotations

import struct
from typing import Optional

from .errors import CatalogError

SEPARATOR = b"\x00"
MAX_DEPTH = 0xFFFF
MAX_VID = (1 << 64) - 1

Vid = int
VID_NEVER = 0  # reserved: "no version"


class PathError(CatalogError):
    pass


class Path:
    """Non-empty component list identifying one object in the hierarchy."""

    __slots__ = ("components",)

    def __init__(self, components):
        comps = tuple(components)
        if not comps:
            raise PathError("path must have at least one component")
        for c in comps:
            if not isinstance(c, str) or not c:
                raise PathError(f"invalid path component: {c!r}")
            if "/" in c or "\x00" in c:
                raise PathError(f"reserved character in component: {c!r}")
        self.components = comps

    @classmethod
    def parse(cls, text: str) -> "Path":
        if not text.startswith("/"):
            raise PathError(f"path must start with '/': {text!r}")
        return cls(text[1:].split("/"))

    @property
    def depth(self) -> int:
        return len(self.components)

    @property
    def object_id(self) -> str:
        return self.components[-1]

    def parent(self) -> Optional["Path"]:
        if len(self.components) == 1:
            return None
        return Path(self.components[:-1])

    def child(self, object_id: str) -> "Path":
        return Path(self.components + (object_id,))

    def is_ancestor_of(self, other: "Path") -> bool:
        return (
            other.depth > self.depth
            and other.components[: self.depth] == self.components
        )

    def __str__(self) -> str:
        return "/" + "/".join(self.components)

    def __repr__(self) -> str:
        return f"Path({str(self)!r})"

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        return self.components == other.components

    def __lt__(self, other):
        return (self.depth, self.components) < (other.depth, other.components)

    def __hash__(self):
        return hash(self.components)


def encode_key(path: Path) -> bytes:
    if path.depth > MAX_DEPTH:
        raise PathError(f"path deeper than {MAX_DEPTH}")
    joined = SEPARATOR.join(c.encode("utf-8") for c in path.components)
    return struct.pack(">H", path.depth) + joined


def decode_key(key: bytes) -> Path:
    if len(key) < 2:
        raise PathError("key too short")
    depth = struct.unpack_from(">H", key)[0]
    comps = key[2:].split(SEPARATOR)
    if len(comps) != depth:
        raise PathError("key depth prefix does not match component count")
    return Path(c.decode("utf-8") for c in comps)


def encode_history_key(path: Path, start_vid: Vid) -> bytes:
    """History keyspace key: path key, separator, inverted start vid.

    The inversion makes newer versions sort first within one path's range.
    """
    return encode_key(path) + SEPARATOR + struct.pack(">Q", MAX_VID - start_vid)


def decode_history_key(key: bytes) -> tuple[Path, Vid]:
    path_part, inv = key[:-9], key[-8:]
    path = decode_key(path_part)
    return path, MAX_VID - struct.unpack(">Q", inv)[0]


def path_history_range(path: Path) -> tuple[bytes, bytes]:
    """Half-open key range holding every history entry of one path."""
    base = encode_key(path)
    return base + SEPARATOR, base + b"\x01"


def descendant_key_range(root: Path, depth: int) -> tuple[bytes, bytes]:
    """Half-open key range covering descendants of `root` at exactly `depth`."""
    if depth <= root.depth:
        raise PathError("descendant depth must exceed the root's depth")
    prefix = SEPARATOR.join(c.encode("utf-8") for c in root.components) + SEPARATOR
    head = struct.pack(">H", depth)
    return head + prefix, head + prefix[:-1] + b"\x01"


def child_key_range(
    parent: Optional[Path],
    low: Optional[tuple[str, bool]] = None,
    high: Optional[tuple[str, bool]] = None,
) -> tuple[bytes, bytes]:
    """Half-open [lo, hi) key range covering the children of `parent`.

    `parent` of None means the virtual root (depth-1 objects). Optional
    (object_id, inclusive) bounds narrow the child-id range; they rely on
    0x00 being forbidden inside components, so `id + b"\\x01"` is the first
    key past every key of `id` in both the object and history keyspaces.
    """
    if parent is None:
        depth = 1
        prefix = b""
    else:
        depth = parent.depth + 1
        prefix = SEPARATOR.join(c.encode("utf-8") for c in parent.components) + SEPARATOR
    head = struct.pack(">H", depth)
    lo = head + prefix
    if prefix:
        hi = head + prefix[:-1] + b"\x01"
    else:
        hi = struct.pack(">H", depth + 1)
    if low is not None:
        low_id, inclusive = low
        lo = head + prefix + low_id.encode("utf-8") + (b"" if inclusive else b"\x01")
    if high is not None:
        high_id, inclusive = high
        hi = head + prefix + high_id.encode("utf-8") + (b"\x01" if inclusive else b"")
    return lo, hi
