"""Event-structured model programs.

A :class:`Model` is an immutable, resumable computation. Asking for its next
:meth:`~Model.step` yields one of a small closed set of step values; the
continuations inside a step are plain functions or further models, so a
model can be duplicated and resumed along several branches at once.
Interpreters (dualization, network composition, the unifier) are written as
functions from models to models that pattern-match on steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .symbolic import BoolExpr, Fresh, Kind, SymVar

DEFAULT_PRODUCTIVITY_BOUND = 10_000


class Model:
    """A lazily evaluated program; ``thunk`` computes the next raw step.

    ``key``, when set, is a hashable description of the program's state: two
    models with equal keys behave identically. Keys let the executor merge
    branches that reached the same state by different routes.
    """

    __slots__ = ("_thunk", "label", "key")

    def __init__(self, thunk: Callable[[], Any], label: str = "", key: Any = None) -> None:
        self._thunk = thunk
        self.label = label
        self.key = key

    def step(self) -> Any:
        return self._thunk()

    def __repr__(self) -> str:
        return f"<Model {self.label}>" if self.label else "<Model>"


@dataclass(frozen=True)
class WantRecv:
    k: Callable[[Any], Model]


@dataclass(frozen=True)
class WantSend:
    pkt: Any
    k: Model


@dataclass(frozen=True)
class Branch:
    cond: BoolExpr
    then: Model
    orelse: Model


@dataclass(frozen=True)
class NewSymbol:
    kind: Kind
    k: Callable[[SymVar], Model]


@dataclass(frozen=True)
class Failed:
    reason: str


@dataclass(frozen=True)
class Internal:
    k: Model


@dataclass(frozen=True)
class Halt:
    """The program has finished; no further events."""


def step(m: Model, bound: int = DEFAULT_PRODUCTIVITY_BOUND) -> Any:
    """Advance through silent steps to the next observable step of ``m``."""
    for _ in range(bound):
        s = m.step()
        if not isinstance(s, Internal):
            return s
        m = s.k
    return Failed("unproductive model")


# -- constructors ------------------------------------------------------------


def recv(k: Callable[[Any], Model]) -> Model:
    return Model(lambda: WantRecv(k), "recv")


def send(pkt: Any, then: Model) -> Model:
    return Model(lambda: WantSend(pkt, then), "send")


def branch(cond: BoolExpr, then: Model, orelse: Model) -> Model:
    return Model(lambda: Branch(cond, then, orelse), "if")


def fresh(kind: Kind, k: Callable[[SymVar], Model]) -> Model:
    return Model(lambda: NewSymbol(kind, k), "fresh")


def fail(reason: str) -> Model:
    return Model(lambda: Failed(reason), "fail")


def halt() -> Model:
    return Model(Halt, "halt")


def silent(then: Model) -> Model:
    return Model(lambda: Internal(then), "tau")


def keyed(m: Model, key: Any) -> Model:
    """``m`` with a state key attached."""
    return Model(m._thunk, m.label, key)


def lazy(build: Callable[[], Model]) -> Model:
    """Defer construction of a model until it is stepped."""
    return Model(lambda: Internal(build()), "lazy")


def or_(a: Model, b: Model) -> Model:
    """Nondeterministic choice, sugar for ``v := fresh(); IF(v, a, b)``."""
    return fresh(Kind.BOOL, lambda v: branch(Fresh(v), a, b))


def pick_one(options: list, k: Callable[[Any], Model]) -> Model:
    """Right-nested ``or`` over ``k(option)`` in the given order."""
    if not options:
        raise ValueError("pick_one needs at least one option")
    head = k(options[0])
    if len(options) == 1:
        return head
    return or_(head, pick_one(options[1:], k))
