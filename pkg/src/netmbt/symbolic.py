"""Symbolic ETags and the per-branch constraint store.

Server-generated entity tags are unknown to the tester until a response
reveals them, so models refer to them through variables. Each branch of the
tester carries an immutable :class:`ConstraintStore` recording what has been
learned about those variables; asserting a fact returns a new store, or
``None`` when the fact contradicts what is already known.

The constraint language is deliberately tiny: a match node compares at most
one variable against a literal tag, and booleans are free variables. That is
all the HTTP models need, and satisfiability stays trivially decidable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union


@dataclass(frozen=True, order=True)
class ETag:
    opaque: str
    weak: bool = False

    def __post_init__(self) -> None:
        for ch in self.opaque:
            if ch == '"' or ord(ch) < 0x20 or ord(ch) == 0x7F:
                raise ValueError(f"invalid character {ch!r} in entity tag")

    @classmethod
    def parse(cls, text: str) -> ETag:
        text = text.strip()
        weak = text.startswith("W/")
        if weak:
            text = text[2:]
        if len(text) < 2 or text[0] != '"' or text[-1] != '"':
            raise ValueError(f"malformed entity tag: {text!r}")
        return cls(text[1:-1], weak)

    def __str__(self) -> str:
        return f'W/"{self.opaque}"' if self.weak else f'"{self.opaque}"'


def strong_compare(a: ETag, b: ETag) -> bool:
    return not a.weak and not b.weak and a.opaque == b.opaque


def weak_compare(a: ETag, b: ETag) -> bool:
    return a.opaque == b.opaque


class Kind(enum.Enum):
    BOOL = "bool"
    TAG = "tag"
    # A tag the server is known to generate as a strong validator.
    STRONG_TAG = "strong-tag"


@dataclass(frozen=True)
class SymVar:
    id: int
    kind: Kind = Kind.TAG

    def __str__(self) -> str:
        return f"${self.kind.value}{self.id}"


# -- tag expressions ---------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    tag: ETag

    def __str__(self) -> str:
        return str(self.tag)


@dataclass(frozen=True)
class Var:
    var: SymVar

    def __str__(self) -> str:
        return str(self.var)


TagExpr = Union[Lit, Var]


# -- boolean expressions -----------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: bool


def _check_match_operands(a: TagExpr, b: TagExpr) -> None:
    if isinstance(a, Var) and isinstance(b, Var):
        raise ValueError("match between two symbolic tags is not supported")


@dataclass(frozen=True)
class StrongMatch:
    left: TagExpr
    right: TagExpr

    def __post_init__(self) -> None:
        _check_match_operands(self.left, self.right)


@dataclass(frozen=True)
class WeakMatch:
    left: TagExpr
    right: TagExpr

    def __post_init__(self) -> None:
        _check_match_operands(self.left, self.right)


@dataclass(frozen=True)
class Not:
    operand: BoolExpr


@dataclass(frozen=True)
class Fresh:
    var: SymVar


BoolExpr = Union[Const, StrongMatch, WeakMatch, Not, Fresh]


# -- knowledge ---------------------------------------------------------------


@dataclass(frozen=True)
class TagInfo:
    """What a branch knows about one tag variable.

    ``opaque`` set and ``weak`` None means the tag is known only up to its
    weak flag (the outcome of a successful weak comparison).
    """

    strong_only: bool = False
    opaque: Optional[str] = None
    weak: Optional[bool] = None
    excluded: frozenset = frozenset()

    @property
    def known(self) -> Optional[ETag]:
        if self.opaque is not None and self.weak is not None:
            return ETag(self.opaque, self.weak)
        return None

    def candidates(self) -> Optional[list[ETag]]:
        """Tags still possible when the opaque part is bound, else None."""
        if self.opaque is None:
            return None
        flags = [False, True] if self.weak is None else [self.weak]
        return [ETag(self.opaque, w) for w in flags if ETag(self.opaque, w) not in self.excluded]


def _settle(info: TagInfo) -> Optional[TagInfo]:
    if info.strong_only:
        if info.weak:
            return None
        if info.opaque is not None:
            info = replace(info, weak=False)
    options = info.candidates()
    if options is None:
        return info
    if not options:
        return None
    if len(options) == 1:
        return replace(info, weak=options[0].weak, excluded=frozenset())
    return replace(info, excluded=frozenset())


def _bind(info: TagInfo, opaque: str, weak: Optional[bool]) -> Optional[TagInfo]:
    if info.opaque is not None and info.opaque != opaque:
        return None
    if weak is not None and info.weak is not None and info.weak != weak:
        return None
    return _settle(replace(info, opaque=opaque, weak=info.weak if weak is None else weak))


def _exclude(info: TagInfo, *tags: ETag) -> Optional[TagInfo]:
    return _settle(replace(info, excluded=info.excluded | frozenset(tags)))


@dataclass(frozen=True)
class ConstraintStore:
    tags: Mapping[int, TagInfo] = field(default_factory=dict)
    bools: Mapping[int, Optional[bool]] = field(default_factory=dict)
    next_id: int = 0

    def tag_info(self, var: SymVar) -> TagInfo:
        try:
            return self.tags[var.id]
        except KeyError:
            raise KeyError(f"unallocated tag variable {var}") from None

    def _with_tag(self, var: SymVar, info: TagInfo) -> ConstraintStore:
        return replace(self, tags={**self.tags, var.id: info})

    def _with_bool(self, var: SymVar, value: bool) -> ConstraintStore:
        return replace(self, bools={**self.bools, var.id: value})

    def describe(self) -> str:
        parts = []
        for vid, info in sorted(self.tags.items()):
            if info.known is not None:
                parts.append(f"$tag{vid}={info.known}")
            elif info.opaque is not None:
                parts.append(f'$tag{vid}~"{info.opaque}"')
            elif info.excluded:
                parts.append(f"$tag{vid}∉{{{', '.join(map(str, sorted(info.excluded)))}}}")
        for vid, val in sorted(self.bools.items()):
            if val is not None:
                parts.append(f"$bool{vid}={val}")
        return ", ".join(parts) or "no constraints"


EMPTY = ConstraintStore()


def new_var(store: ConstraintStore, kind: Kind) -> tuple[SymVar, ConstraintStore]:
    var = SymVar(store.next_id, kind)
    if kind is Kind.BOOL:
        bools = {**store.bools, var.id: None}
        return var, replace(store, bools=bools, next_id=store.next_id + 1)
    info = TagInfo(strong_only=kind is Kind.STRONG_TAG)
    return var, replace(store, tags={**store.tags, var.id: info}, next_id=store.next_id + 1)


def _split_match(left: TagExpr, right: TagExpr) -> tuple[Optional[SymVar], ETag, Optional[ETag]]:
    if isinstance(left, Var):
        return left.var, right.tag, None  # type: ignore[union-attr]
    if isinstance(right, Var):
        return right.var, left.tag, None
    return None, left.tag, right.tag


def assert_bool(e: BoolExpr, expected: bool, store: ConstraintStore) -> Optional[ConstraintStore]:
    """Record that ``e`` evaluates to ``expected``; None if that is impossible."""
    if isinstance(e, Const):
        return store if e.value == expected else None
    if isinstance(e, Not):
        return assert_bool(e.operand, not expected, store)
    if isinstance(e, Fresh):
        current = store.bools.get(e.var.id)
        if current is None:
            return store._with_bool(e.var, expected)
        return store if current == expected else None

    var, lit, other = _split_match(e.left, e.right)
    strong = isinstance(e, StrongMatch)
    if var is None:
        assert other is not None
        actual = strong_compare(lit, other) if strong else weak_compare(lit, other)
        return store if actual == expected else None

    info = store.tag_info(var)
    if strong and expected:
        updated = None if lit.weak else _bind(info, lit.opaque, False)
    elif strong:
        # A weak literal never strong-matches anything.
        updated = info if lit.weak else _exclude(info, ETag(lit.opaque, False))
    elif expected:
        updated = _bind(info, lit.opaque, None)
    else:
        updated = _exclude(info, ETag(lit.opaque, False), ETag(lit.opaque, True))
    if updated is None:
        return None
    return store if updated == info else store._with_tag(var, updated)


def assert_tag(e: TagExpr, observed: ETag, store: ConstraintStore) -> Optional[ConstraintStore]:
    """Record that ``e`` is exactly ``observed``, weak flag included."""
    if isinstance(e, Lit):
        return store if e.tag == observed else None
    info = store.tag_info(e.var)
    updated = _bind(info, observed.opaque, observed.weak)
    if updated is None:
        return None
    return store if updated == info else store._with_tag(e.var, updated)


def evaluate(e: BoolExpr, store: ConstraintStore) -> Optional[bool]:
    """The value ``e`` must take under ``store``, or None when undetermined."""
    can_true = assert_bool(e, True, store) is not None
    can_false = assert_bool(e, False, store) is not None
    if can_true and not can_false:
        return True
    if can_false and not can_true:
        return False
    if not can_true and not can_false:
        raise ValueError("constraint store is unsatisfiable")
    return None


def show(e: Union[BoolExpr, TagExpr]) -> str:
    if isinstance(e, (Lit, Var)):
        return str(e)
    if isinstance(e, Const):
        return str(e.value).lower()
    if isinstance(e, Not):
        return f"!{show(e.operand)}"
    if isinstance(e, Fresh):
        return str(e.var)
    op = "===" if isinstance(e, StrongMatch) else "=~"
    return f"({show(e.left)} {op} {show(e.right)})"
