"""Path query language: one predicate per hierarchy level.

    query := ('/' level)+
    level := '*' | '[' expr ']'
    expr  := or-expr over and-expr over atoms
    atom  := operand cmp operand (cmp operand)?          cmp in < <= = >= > !=
           | endswith(field, 'suffix')

Operands are dotted field paths or literals (single-quoted strings, integers,
floats). The reserved field name obj_id resolves to the object's own id (the
last path component); a chained comparison like [1 < obj_id < 100] desugars
into a conjunction. Predicate evaluation is pure and total: type mismatches
and missing fields yield false, never errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .document import ABSENT, Document, NonScalarField, compare_scalars, get_field
from .errors import QuerySyntaxError
from .store import IdBounds, _id_order

_CMP_OPS = ("<", "<=", "=", ">=", ">", "!=")
_FLIP = {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<", "!=": "!="}
_ID_TESTS = {
    "<": lambda c: c is not None and c < 0,
    "<=": lambda c: c is not None and c <= 0,
    "=": lambda c: c is not None and c == 0,
    ">=": lambda c: c is not None and c >= 0,
    ">": lambda c: c is not None and c > 0,
    "!=": lambda c: c is not None and c != 0,
}


def _quote(value) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value)


class Predicate:
    """Base class; subclasses implement matches() and to_text()."""

    def matches(self, object_id: str, doc: Document) -> bool:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_text()!r})"


@dataclass(frozen=True, repr=False)
class Wildcard(Predicate):
    def matches(self, object_id, doc):
        return True

    def to_text(self):
        return "*"


@dataclass(frozen=True, repr=False)
class Cmp(Predicate):
    field: str
    op: str
    literal: object

    def matches(self, object_id, doc):
        if self.field == "obj_id":
            # Key-derived id wins even if the document carries an obj_id
            # field; numeric literals compare numerically on integer ids.
            return _ID_TESTS[self.op](_id_order(object_id, self.literal))
        try:
            value = get_field(doc, self.field)
        except NonScalarField:
            return False
        if value is ABSENT:
            return False
        return compare_scalars(value, self.literal, self.op)

    def to_text(self):
        return f"{self.field} {self.op} {_quote(self.literal)}"


@dataclass(frozen=True, repr=False)
class EndsWith(Predicate):
    field: str
    suffix: str

    def matches(self, object_id, doc):
        if self.field == "obj_id":
            return object_id.endswith(self.suffix)
        try:
            value = get_field(doc, self.field)
        except NonScalarField:
            return False
        return isinstance(value, str) and value.endswith(self.suffix)

    def to_text(self):
        return f"endswith({self.field}, {_quote(self.suffix)})"


@dataclass(frozen=True, repr=False)
class And(Predicate):
    parts: tuple

    def matches(self, object_id, doc):
        return all(p.matches(object_id, doc) for p in self.parts)

    def to_text(self):
        return " and ".join(_maybe_paren(p, (Or,)) for p in self.parts)


@dataclass(frozen=True, repr=False)
class Or(Predicate):
    parts: tuple

    def matches(self, object_id, doc):
        return any(p.matches(object_id, doc) for p in self.parts)

    def to_text(self):
        return " or ".join(p.to_text() for p in self.parts)


@dataclass(frozen=True, repr=False)
class Not(Predicate):
    part: Predicate

    def matches(self, object_id, doc):
        return not self.part.matches(object_id, doc)

    def to_text(self):
        return f"not ({self.part.to_text()})"


def _maybe_paren(p: Predicate, wrap_types) -> str:
    text = p.to_text()
    return f"({text})" if isinstance(p, wrap_types) else text


@dataclass(frozen=True)
class PathQuery:
    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)

    def to_text(self) -> str:
        out = []
        for pred in self.levels:
            if isinstance(pred, Wildcard):
                out.append("/*")
            else:
                out.append(f"/[{pred.to_text()}]")
        return "".join(out)


# -- tokenizer ----------------------------------------------------------

_PUNCT = {"/", "*", "[", "]", "(", ")", ","}


def _tokenize(text: str):
    tokens = []  # (kind, value, position)
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append(("punct", ch, i))
            i += 1
            continue
        if ch in "<>!=":
            if text[i : i + 2] in ("<=", ">=", "!="):
                tokens.append(("op", text[i : i + 2], i))
                i += 2
            elif ch == "!":
                raise QuerySyntaxError("expected '!='", i)
            else:
                tokens.append(("op", ch, i))
                i += 1
            continue
        if ch == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise QuerySyntaxError("unterminated string literal", i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(("string", "".join(buf), i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            raw = text[i:j]
            try:
                value = float(raw) if "." in raw else int(raw)
            except ValueError:
                raise QuerySyntaxError(f"bad number literal {raw!r}", i) from None
            tokens.append(("number", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_."):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise QuerySyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("eof", None, n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.advance()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            raise QuerySyntaxError(f"expected {want!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse_query(self) -> PathQuery:
        levels = []
        while self.peek()[:2] == ("punct", "/"):
            self.advance()
            levels.append(self.parse_level())
        tok = self.peek()
        if tok[0] != "eof":
            raise QuerySyntaxError(f"unexpected {tok[1]!r}", tok[2])
        if not levels:
            raise QuerySyntaxError("query must have at least one level", 0)
        return PathQuery(tuple(levels))

    def parse_level(self) -> Predicate:
        tok = self.peek()
        if tok[:2] == ("punct", "*"):
            self.advance()
            return Wildcard()
        if tok[:2] == ("punct", "["):
            self.advance()
            expr = self.parse_or()
            self.expect("punct", "]")
            return expr
        raise QuerySyntaxError(f"expected '*' or '[', found {tok[1]!r}", tok[2])

    def parse_or(self) -> Predicate:
        parts = [self.parse_and()]
        while self.peek()[:2] == ("ident", "or"):
            self.advance()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self) -> Predicate:
        parts = [self.parse_unary()]
        while self.peek()[:2] == ("ident", "and"):
            self.advance()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_unary(self) -> Predicate:
        tok = self.peek()
        if tok[:2] == ("ident", "not"):
            self.advance()
            return Not(self.parse_unary())
        if tok[:2] == ("punct", "("):
            self.advance()
            expr = self.parse_or()
            self.expect("punct", ")")
            return expr
        return self.parse_atom()

    def parse_atom(self) -> Predicate:
        tok = self.peek()
        if tok[:2] == ("ident", "endswith"):
            self.advance()
            self.expect("punct", "(")
            field = self.expect("ident")[1]
            self.expect("punct", ",")
            suffix = self.expect("string")[1]
            self.expect("punct", ")")
            return EndsWith(field, suffix)
        left = self.parse_operand()
        op_tok = self.expect("op")
        middle = self.parse_operand()
        first = self._make_cmp(left, op_tok, middle)
        if self.peek()[0] == "op":
            # chained form: literal cmp field cmp literal
            op2 = self.advance()
            right = self.parse_operand()
            second = self._make_cmp(middle, op2, right)
            return And((first, second))
        return first

    def parse_operand(self):
        tok = self.advance()
        if tok[0] == "ident":
            if tok[1] in ("and", "or", "not", "endswith"):
                raise QuerySyntaxError(f"unexpected keyword {tok[1]!r}", tok[2])
            return ("field", tok[1], tok[2])
        if tok[0] in ("string", "number"):
            return ("literal", tok[1], tok[2])
        raise QuerySyntaxError(f"expected field or literal, found {tok[1]!r}", tok[2])

    @staticmethod
    def _make_cmp(left, op_tok, right) -> Cmp:
        op = op_tok[1]
        if left[0] == "field" and right[0] == "literal":
            return Cmp(left[1], op, right[1])
        if left[0] == "literal" and right[0] == "field":
            return Cmp(right[1], _FLIP[op], left[1])
        kind = "literals" if left[0] == "literal" else "fields"
        raise QuerySyntaxError(f"comparison of two {kind} is not supported", op_tok[2])


def parse_query(text: str) -> PathQuery:
    """Parse query text into a predicate-per-level AST."""
    return _Parser(text).parse_query()


def parse_predicate(text: str) -> Predicate:
    """Parse a single level expression ('*' or a bare boolean expression).

    Used when predicates travel alone, e.g. in recorded histories.
    """
    if text.strip() == "*":
        return Wildcard()
    parser = _Parser(f"/[{text}]")
    query = parser.parse_query()
    return query.levels[0]


# -- planner helpers ------------------------------------------------------


def extract_bounds(pred: Predicate) -> Optional[IdBounds]:
    """Child-id interval implied by a predicate, or None.

    Only a pure conjunction of atoms can constrain the scan range; any
    disjunction or negation disables the optimization for the level.
    """
    atoms = []
    if not _collect_conjuncts(pred, atoms):
        return None
    low = high = None
    for atom in atoms:
        if not isinstance(atom, Cmp) or atom.field != "obj_id":
            continue
        lit = atom.literal
        if atom.op in ("<", "<="):
            candidate = (lit, atom.op == "<=")
            high = _tighten(high, candidate, prefer_low=True)
        elif atom.op in (">", ">="):
            candidate = (lit, atom.op == ">=")
            low = _tighten(low, candidate, prefer_low=False)
        elif atom.op == "=":
            low = _tighten(low, (lit, True), prefer_low=False)
            high = _tighten(high, (lit, True), prefer_low=True)
        if low is _INCOMPARABLE or high is _INCOMPARABLE:
            return None
    if low is None and high is None:
        return None
    return IdBounds(low=low, high=high)


_INCOMPARABLE = object()


def _collect_conjuncts(pred: Predicate, out: list) -> bool:
    if isinstance(pred, And):
        return all(_collect_conjuncts(p, out) for p in pred.parts)
    if isinstance(pred, (Or, Not)):
        return False
    out.append(pred)
    return True


def _tighten(current, candidate, prefer_low: bool):
    if current is None:
        return candidate
    cur_val, cur_inc = current
    new_val, new_inc = candidate
    if type(cur_val) is not type(new_val) and not (
        isinstance(cur_val, (int, float)) and isinstance(new_val, (int, float))
    ):
        return _INCOMPARABLE
    if new_val == cur_val:
        return (cur_val, cur_inc and new_inc)
    take_new = new_val < cur_val if prefer_low else new_val > cur_val
    return candidate if take_new else current
