"""Document value model: ordered-field binary documents, field access,
scalar comparison, and the commutative merge-delta algebra.

A document is an ordered sequence of (name, value) fields where a value is a
scalar (null, bool, int64, float64, str, bytes), a nested document, or an
array of scalars/documents. Documents are immutable after construction and
encode to a deterministic binary form, so two equal documents always produce
identical bytes.
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Any, Iterable, Iterator

from .errors import CatalogError

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

_TAG_NULL = 0x00
_TAG_FALSE = 0x01
_TAG_TRUE = 0x02
_TAG_INT = 0x03
_TAG_FLOAT = 0x04
_TAG_STR = 0x05
_TAG_BYTES = 0x06
_TAG_DOC = 0x07
_TAG_ARRAY = 0x08


class _Absent:
    """Singleton marking a missing field; distinct from the null scalar."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"

    def __bool__(self):
        return False


ABSENT = _Absent()

Scalar = Any  # None | bool | int | float | str | bytes


class NonScalarField(CatalogError):
    """A field path resolved to a document or array where a scalar was required."""


def is_scalar(value) -> bool:
    return value is None or isinstance(value, (bool, int, float, str, bytes))


def _check_scalar(value):
    if isinstance(value, bool) or value is None or isinstance(value, (float, str, bytes)):
        return value
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise ValueError(f"integer out of int64 range: {value}")
        return value
    raise TypeError(f"unsupported scalar type: {type(value).__name__}")


def _normalize(value):
    if isinstance(value, Document):
        return value
    if isinstance(value, dict):
        return Document(value)
    if isinstance(value, (list, tuple)):
        return tuple(_normalize(v) for v in value)
    return _check_scalar(value)


class Document:
    """Immutable ordered-field document.

    Accepts a dict or an iterable of (name, value) pairs; nested dicts become
    nested documents. Field names must be unique within one level.
    """

    __slots__ = ("_pairs", "_index", "_encoded")

    def __init__(self, fields: dict | Iterable[tuple[str, Any]] = ()):
        if isinstance(fields, dict):
            items = fields.items()
        else:
            items = fields
        pairs = []
        index = {}
        for name, value in items:
            if not isinstance(name, str) or not name:
                raise ValueError(f"invalid field name: {name!r}")
            if name in index:
                raise ValueError(f"duplicate field name: {name!r}")
            norm = _normalize(value)
            index[name] = norm
            pairs.append((name, norm))
        self._pairs = tuple(pairs)
        self._index = index
        self._encoded = None

    def __contains__(self, name) -> bool:
        return name in self._index

    def __getitem__(self, name):
        return self._index[name]

    def get(self, name, default=ABSENT):
        return self._index.get(name, default)

    def items(self) -> Iterator[tuple[str, Any]]:
        return iter(self._pairs)

    def keys(self):
        return (name for name, _ in self._pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return self._pairs == other._pairs

    def __hash__(self):
        return hash(self._pairs)

    def __repr__(self) -> str:
        return f"Document({self.to_json_obj()!r})"

    # -- binary codec -------------------------------------------------

    def encode(self) -> bytes:
        """Canonical binary form; cached since the document is immutable."""
        if self._encoded is None:
            out = bytearray()
            _write_doc_body(out, self)
            self._encoded = bytes(out)
        return self._encoded

    @classmethod
    def decode(cls, data: bytes) -> "Document":
        doc, pos = _read_doc_body(data, 0)
        if pos != len(data):
            raise ValueError("trailing bytes after document")
        return doc

    # -- JSON text form -----------------------------------------------

    def to_json_obj(self):
        return {name: _value_to_json(value) for name, value in self._pairs}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    @classmethod
    def from_json_obj(cls, obj) -> "Document":
        if not isinstance(obj, dict):
            raise ValueError("document JSON form must be an object")
        return cls([(k, _value_from_json(v)) for k, v in obj.items()])

    @classmethod
    def from_json(cls, text: str) -> "Document":
        return cls.from_json_obj(json.loads(text))


def _value_to_json(value):
    if isinstance(value, Document):
        return value.to_json_obj()
    if isinstance(value, tuple):
        return [_value_to_json(v) for v in value]
    if isinstance(value, bytes):
        return {"$bytes": base64.b64encode(value).decode("ascii")}
    return value

def _value_from_json(obj):
    if isinstance(obj, dict):
        if set(obj.keys()) == {"$bytes"} and isinstance(obj["$bytes"], str):
            return base64.b64decode(obj["$bytes"])
        return Document.from_json_obj(obj)
    if isinstance(obj, list):
        return tuple(_value_from_json(v) for v in obj)
    return _check_scalar(obj)


def _write_varint(out: bytearray, n: int):
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ValueError("truncated varint")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7


def _write_value(out: bytearray, value):
    if value is None:
        out.append(_TAG_NULL)
    elif isinstance(value, bool):
        out.append(_TAG_TRUE if value else _TAG_FALSE)
    elif isinstance(value, int):
        out.append(_TAG_INT)
        out += struct.pack(">q", value)
    elif isinstance(value, float):
        out.append(_TAG_FLOAT)
        out += struct.pack(">d", value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out.append(_TAG_STR)
        _write_varint(out, len(raw))
        out += raw
    elif isinstance(value, bytes):
        out.append(_TAG_BYTES)
        _write_varint(out, len(value))
        out += value
    elif isinstance(value, Document):
        out.append(_TAG_DOC)
        _write_doc_body(out, value)
    elif isinstance(value, tuple):
        out.append(_TAG_ARRAY)
        _write_varint(out, len(value))
        for item in value:
            _write_value(out, item)
    else:  # pragma: no cover - construction already rejects these
        raise TypeError(f"unencodable value: {type(value).__name__}")


def _write_doc_body(out: bytearray, doc: Document):
    _write_varint(out, len(doc))
    for name, value in doc.items():
        raw = name.encode("utf-8")
        _write_varint(out, len(raw))
        out += raw
        _write_value(out, value)


def _read_value(data: bytes, pos: int):
    tag = data[pos]
    pos += 1
    if tag == _TAG_NULL:
        return None, pos
    if tag == _TAG_FALSE:
        return False, pos
    if tag == _TAG_TRUE:
        return True, pos
    if tag == _TAG_INT:
        return struct.unpack_from(">q", data, pos)[0], pos + 8
    if tag == _TAG_FLOAT:
        return struct.unpack_from(">d", data, pos)[0], pos + 8
    if tag == _TAG_STR:
        n, pos = _read_varint(data, pos)
        return data[pos : pos + n].decode("utf-8"), pos + n
    if tag == _TAG_BYTES:
        n, pos = _read_varint(data, pos)
        return bytes(data[pos : pos + n]), pos + n
    if tag == _TAG_DOC:
        return _read_doc_body(data, pos)
    if tag == _TAG_ARRAY:
        n, pos = _read_varint(data, pos)
        items = []
        for _ in range(n):
            item, pos = _read_value(data, pos)
            items.append(item)
        return tuple(items), pos
    raise ValueError(f"unknown value tag: {tag:#x}")


def _read_doc_body(data: bytes, pos: int) -> tuple[Document, int]:
    n, pos = _read_varint(data, pos)
    pairs = []
    for _ in range(n):
        ln, pos = _read_varint(data, pos)
        name = data[pos : pos + ln].decode("utf-8")
        pos += ln
        value, pos = _read_value(data, pos)
        pairs.append((name, value))
    return Document(pairs), pos


# -- field access ------------------------------------------------------


def get_field(doc: Document, field_path: str):
    """Resolve a dotted field path to a scalar.

    Returns ABSENT if any component is missing or an intermediate component
    is not a nested document. Raises NonScalarField if the path lands on a
    document or array.
    """
    if not field_path:
        raise ValueError("empty field path")
    current = doc
    parts = field_path.split(".")
    for part in parts[:-1]:
        if not isinstance(current, Document):
            return ABSENT
        current = current.get(part)
        if current is ABSENT:
            return ABSENT
    if not isinstance(current, Document):
        return ABSENT
    value = current.get(parts[-1])
    if value is ABSENT:
        return ABSENT
    if isinstance(value, (Document, tuple)):
        raise NonScalarField(f"field {field_path!r} is not a scalar")
    return value


# -- scalar comparison -------------------------------------------------

_OPS = {
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    "=": lambda c: c == 0,
    ">=": lambda c: c >= 0,
    ">": lambda c: c > 0,
    "!=": lambda c: c != 0,
}


def _scalar_order(a, b):
    """Three-way compare within the comparable domain, or None if
    the pair is not comparable (differing types, or absent)."""
    if a is ABSENT or b is ABSENT:
        return None
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        if a_bool and b_bool:
            return (a > b) - (a < b)
        return None
    a_num = isinstance(a, (int, float))
    b_num = isinstance(b, (int, float))
    if a_num and b_num:
        return (a > b) - (a < b)
    if isinstance(a, str) and isinstance(b, str):
        return (a > b) - (a < b)
    if isinstance(a, bytes) and isinstance(b, bytes):
        return (a > b) - (a < b)
    if a is None and b is None:
        return 0
    return None


def compare_scalars(a, b, op: str) -> bool:
    """Predicate-filter comparison semantics.

    int64 and float64 compare numerically across the two types; strings
    compare by code point. Any other cross-type pair, or a comparison
    involving ABSENT, evaluates to False so scans never abort mid-predicate.
    """
    try:
        test = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown comparison operator: {op!r}") from None
    order = _scalar_order(a, b)
    if order is None:
        return False
    return test(order)


# -- merge deltas ------------------------------------------------------

DELTA_OPS = ("add", "subtract", "min", "max")

_WIRE_DELTA_OPS = {"+": "add", "-": "subtract", "min": "min", "max": "max"}
_DELTA_OPS_WIRE = {v: k for k, v in _WIRE_DELTA_OPS.items()}


class Delta:
    """Ordered list of commutative numeric update operations.

    Each entry is (dotted field path, op, operand) with op one of add,
    subtract, min, max. Operand type must match the target field's numeric
    type, which keeps merge results deterministic and byte-comparable.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: Iterable[tuple[str, str, Any]]):
        checked = []
        for field_path, op, operand in entries:
            if op not in DELTA_OPS:
                raise ValueError(f"unknown delta op: {op!r}")
            if isinstance(operand, bool) or not isinstance(operand, (int, float)):
                raise ValueError(f"delta operand must be numeric: {operand!r}")
            if not field_path:
                raise ValueError("empty delta field path")
            checked.append((field_path, op, operand))
        self.entries = tuple(checked)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, Delta):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self):
        return f"Delta({list(self.entries)!r})"

    def to_json_obj(self):
        return {
            path: {"op": _DELTA_OPS_WIRE[op], "val": operand}
            for path, op, operand in self.entries
        }

    @classmethod
    def from_json_obj(cls, obj) -> "Delta":
        if not isinstance(obj, dict):
            raise ValueError("delta JSON form must be an object")
        entries = []
        for path, spec in obj.items():
            if not isinstance(spec, dict) or "op" not in spec or "val" not in spec:
                raise ValueError(f"malformed delta entry for {path!r}")
            op = _WIRE_DELTA_OPS.get(spec["op"])
            if op is None:
                raise ValueError(f"unknown delta op: {spec['op']!r}")
            entries.append((path, op, spec["val"]))
        return cls(entries)


def _apply_op(op: str, base, operand):
    if op == "add":
        return base + operand
    if op == "subtract":
        return base - operand
    if op == "min":
        return min(base, operand)
    return max(base, operand)


def apply_delta(base: Document, delta: Delta) -> Document:
    """Apply a merge delta, returning a new document.

    Every targeted field must resolve to a numeric scalar of the same type
    as the operand; untouched fields are preserved byte-identically.
    """
    result = base
    for field_path, op, operand in delta:
        parts = field_path.split(".")
        result = _apply_at(result, parts, op, operand, field_path)
    return result


def _apply_at(doc: Document, parts: list[str], op, operand, full_path: str) -> Document:
    name = parts[0]
    current = doc.get(name)
    if current is ABSENT:
        raise PreconditionDeltaError(f"missing field {full_path!r}")
    if len(parts) == 1:
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise PreconditionDeltaError(f"field {full_path!r} is not numeric")
        if type(current) is not type(operand):
            raise PreconditionDeltaError(
                f"operand type {type(operand).__name__} does not match "
                f"field {full_path!r} of type {type(current).__name__}"
            )
        new_value = _apply_op(op, current, operand)
        if isinstance(new_value, int) and not INT64_MIN <= new_value <= INT64_MAX:
            raise PreconditionDeltaError(f"int64 overflow on {full_path!r}")
    else:
        if not isinstance(current, Document):
            raise PreconditionDeltaError(f"missing field {full_path!r}")
        new_value = _apply_at(current, parts[1:], op, operand, full_path)
    return Document(
        (name, new_value) if n == name else (n, v) for n, v in doc.items()
    )


class PreconditionDeltaError(CatalogError):
    """Merge delta could not be applied to the base document."""
