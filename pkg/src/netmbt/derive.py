"""From a (composed) server model to a nondeterministic tester.

Two interpreters, applied in sequence:

* :func:`dualize` turns the server's view into an observer's: where the
  model receives, the observer generates and sends; where the model sends,
  the observer receives and guards; where the model branches on a symbolic
  condition, the observer determines between both outcomes after unifying
  the condition with the conjectured value.
* :func:`unifier` instantiates the observer's unify/guard events against a
  per-branch constraint store and a model-to-physical connection map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Optional

from .codec import HttpRequest, HttpResponse, Message
from .httpmodel import ModelResponse
from .model import (
    DEFAULT_PRODUCTIVITY_BOUND,
    Branch,
    Failed,
    Halt,
    Model,
    NewSymbol,
    WantRecv,
    WantSend,
    step,
)
from .network import Mcid, Origin, Packet
from .symbolic import (
    EMPTY,
    BoolExpr,
    ConstraintStore,
    Lit,
    Var,
    assert_bool,
    assert_tag,
    new_var,
    show,
)
from .wire import Pcid, Wire

# -- observer events ---------------------------------------------------------


@dataclass(frozen=True)
class ObsGen:
    k: Callable[[Packet], Model]


@dataclass(frozen=True)
class ObsSend:
    pkt: Packet
    k: Model


@dataclass(frozen=True)
class ObsExpect:
    k: Callable[[Wire], Model]
    pkt: Optional[Packet] = None
    rest: Optional[Model] = None


@dataclass(frozen=True)
class ObsGuard:
    expected: Packet
    observed: Wire
    k: Model


@dataclass(frozen=True)
class ObsUnify:
    cond: BoolExpr
    value: bool
    k: Model


@dataclass(frozen=True)
class ObsDetermine:
    cond: BoolExpr
    first: Model
    second: Model


def _unify_then(cond: BoolExpr, value: bool, then: Model) -> Model:
    return Model(lambda: ObsUnify(cond, value, then), "unify")


def dualize(m: Model) -> Model:
    """The observer of ``m``."""

    def go() -> Any:
        s = step(m)
        if isinstance(s, WantRecv):
            k = s.k
            return ObsGen(lambda p: Model(lambda: ObsSend(p, dualize(k(p))), "send"))
        if isinstance(s, WantSend):
            pkt, rest = s.pkt, dualize(s.k)
            return ObsExpect(lambda w: Model(lambda: ObsGuard(pkt, w, rest), "guard"), pkt, rest)
        if isinstance(s, Branch):
            return ObsDetermine(
                s.cond,
                _unify_then(s.cond, True, dualize(s.then)),
                _unify_then(s.cond, False, dualize(s.orelse)),
            )
        if isinstance(s, NewSymbol):
            k = s.k
            return NewSymbol(s.kind, lambda v: dualize(k(v)))
        return s  # Failed / Halt

    return Model(go, "observe", None if m.key is None else ("observe", m))


# -- tester steps ------------------------------------------------------------


@dataclass(frozen=True)
class Generate:
    """Needs a concrete packet from the shared generator before it can send."""

    k: Callable[[Wire], Tester]


@dataclass(frozen=True)
class EmitRequest:
    wire: Wire
    k: Tester


@dataclass(frozen=True)
class ExpectResponse:
    k: Callable[[Wire], Tester]
    # what is expected and the state afterwards, for merging equal branches
    pkt: Optional[Packet] = None
    rest: Optional[Model] = None
    at: Optional[Tester] = None


@dataclass(frozen=True)
class Determine:
    label: str
    first: Tester
    second: Tester


# -- connection map ----------------------------------------------------------


@dataclass(frozen=True)
class ConnMap:
    """Injective partial map from server-created mcids to physical connections."""

    fwd: Mapping[Mcid, Pcid] = field(default_factory=dict)
    back: Mapping[Pcid, Mcid] = field(default_factory=dict)

    def get(self, mcid: Mcid) -> Optional[Pcid]:
        return self.fwd.get(mcid)

    def inverse(self, pcid: Pcid) -> Optional[Mcid]:
        return self.back.get(pcid)

    def bind(self, mcid: Mcid, pcid: Pcid) -> Optional[ConnMap]:
        """Record ``mcid -> pcid``; None if either side is already taken."""
        current = self.fwd.get(mcid)
        if current is not None:
            return self if current == pcid else None
        if pcid in self.back:
            return None
        return ConnMap({**self.fwd, mcid: pcid}, {**self.back, pcid: mcid})

    def __len__(self) -> int:
        return len(self.fwd)


def client_pcid(mcid: Mcid) -> Pcid:
    return Pcid(mcid.id, False)


# -- guard -------------------------------------------------------------------


def _expected_response(expected: Any) -> ModelResponse:
    if isinstance(expected, ModelResponse):
        return expected
    tag = expected.etag
    return ModelResponse(expected.status, None if tag is None else Lit(tag), expected.body)


def match_payload(
    expected: Any, observed: Optional[Message], store: ConstraintStore, *, strict_status: bool = False
) -> tuple[Optional[ConstraintStore], str]:
    """Field-wise comparison of a model payload with an observed message."""
    if observed is None:
        return None, "malformed message"
    if isinstance(expected, (ModelResponse, HttpResponse)):
        if not isinstance(observed, HttpResponse):
            return None, "expected a response"
        exp = _expected_response(expected)
        if exp.status != observed.status:
            both_2xx = exp.status // 100 == 2 and observed.status // 100 == 2
            if strict_status or not both_2xx:
                return None, f"status {observed.status}, expected {exp.status}"
        if exp.body is not None and exp.body != observed.body:
            return None, f"body {observed.body!r}, expected {exp.body!r}"
        if exp.etag is not None:
            try:
                tag = observed.etag
            except ValueError:
                return None, "unparseable ETag"
            if tag is None:
                return None, f"missing ETag, expected {show(exp.etag)}"
            updated = assert_tag(exp.etag, tag, store)
            if updated is None:
                return None, f"ETag {tag} incompatible with {show(exp.etag)}"
            store = updated
        return store, ""
    if isinstance(expected, HttpRequest):
        if not isinstance(observed, HttpRequest):
            return None, "expected a request"
        if (expected.method, expected.target, expected.body) != (observed.method, observed.target, observed.body):
            return None, f"forwarded {observed.summary()}, expected {expected.summary()}"
        for name in ("If-Match", "If-None-Match"):
            if expected.header(name) != observed.header(name):
                return None, f"{name} header differs"
        return store, ""
    raise TypeError(f"cannot guard payload {expected!r}")


# -- unifier -----------------------------------------------------------------


@dataclass(frozen=True)
class Tester:
    """An observer paired with one branch's knowledge.

    ``step`` runs the observer's silent events (fresh, unify, guard) against
    the store and map, and stops at the next step the executor must handle.
    """

    obs: Model
    connmap: ConnMap = ConnMap()
    store: ConstraintStore = EMPTY
    strict_status: bool = False
    bound: int = DEFAULT_PRODUCTIVITY_BOUND

    def _at(self, obs: Model, connmap: ConnMap, store: ConstraintStore) -> Tester:
        return replace(self, obs=obs, connmap=connmap, store=store)

    def _to_model(self, w: Wire, connmap: ConnMap) -> Optional[Packet]:
        if not w.pcid.sut_initiated:
            return Packet(Mcid(w.pcid.id, Origin.CLIENT), True, w.msg)
        mcid = connmap.inverse(w.pcid)
        return None if mcid is None else Packet(mcid, True, w.msg)

    def _to_wire(self, pkt: Packet, connmap: ConnMap) -> Optional[Wire]:
        pcid = connmap.get(pkt.conn) if pkt.conn.server_created else client_pcid(pkt.conn)
        return None if pcid is None else Wire(pcid, pkt.payload)

    def _guard(self, g: ObsGuard, connmap: ConnMap, store: ConstraintStore):
        exp, obs = g.expected, g.observed
        updated, why = match_payload(exp.payload, obs.msg, store, strict_status=self.strict_status)
        if updated is None:
            return f"Unexpected payload: {why} (expected {exp}, observed {obs})"
        if exp.conn.server_created:
            bound = connmap.bind(exp.conn, obs.pcid) if obs.pcid.sut_initiated else None
            if bound is None:
                return f"Unexpected connection: {exp.conn} observed on {obs.pcid}"
            return bound, updated
        if obs.pcid != client_pcid(exp.conn):
            return f"Unexpected connection: {exp.conn} observed on {obs.pcid}"
        return connmap, updated

    def step(self) -> Any:
        obs, connmap, store = self.obs, self.connmap, self.store
        for _ in range(self.bound):
            s = step(obs)
            if isinstance(s, NewSymbol):
                var, store = new_var(store, s.kind)
                obs = s.k(var)
            elif isinstance(s, ObsUnify):
                updated = assert_bool(s.cond, s.value, store)
                if updated is None:
                    return Failed(f"Unexpected payload: cannot have {show(s.cond)} = {s.value}")
                obs, store = s.k, updated
            elif isinstance(s, ObsGuard):
                result = self._guard(s, connmap, store)
                if isinstance(result, str):
                    return Failed(result)
                connmap, store = result
                obs = s.k
            elif isinstance(s, ObsDetermine):
                return Determine(
                    show(s.cond), self._at(s.first, connmap, store), self._at(s.second, connmap, store)
                )
            elif isinstance(s, ObsGen):
                return Generate(self._generated(s.k, connmap, store))
            elif isinstance(s, ObsSend):
                wire = self._to_wire(s.pkt, connmap)
                if wire is None:
                    return Failed(f"Unexpected connection: no physical connection for {s.pkt.conn}")
                return EmitRequest(wire, self._at(s.k, connmap, store))
            elif isinstance(s, ObsExpect):
                k = s.k
                return ExpectResponse(
                    lambda w: self._at(k(w), connmap, store), s.pkt, s.rest, self._at(obs, connmap, store)
                )
            elif isinstance(s, (Failed, Halt)):
                return s
            else:
                raise TypeError(f"unexpected observer step {s!r}")
        return Failed("unproductive tester")

    def _generated(self, k: Callable[[Packet], Model], connmap: ConnMap, store: ConstraintStore):
        def feed(w: Wire) -> Tester:
            pkt = self._to_model(w, connmap)
            if pkt is None:
                return self._at(Model(lambda: Failed(f"Unexpected connection: {w.pcid} is unmapped")), connmap, store)
            return self._at(k(pkt), connmap, store)

        return feed


# -- branch identity ---------------------------------------------------------


class _Unkeyed(Exception):
    pass


def _canon(x: Any, names: dict[int, int]) -> Any:
    """``x`` with symbolic variables renamed in order of first appearance."""
    if isinstance(x, Var):
        return ("var", names.setdefault(x.var.id, len(names)))
    if isinstance(x, tuple):
        return tuple(_canon(e, names) for e in x)
    if isinstance(x, Model):
        if x.key is None:
            raise _Unkeyed
        return _canon(x.key, names)
    if isinstance(x, Packet):
        return ("pkt", x.conn, x.to_server, _canon(x.payload, names))
    if isinstance(x, ModelResponse):
        return ("resp", x.status, _canon(x.etag, names), x.body)
    return x


def front_key(front: Any) -> Optional[tuple]:
    """Identity of a branch's future: equal keys mean interchangeable branches."""
    if isinstance(front, EmitRequest):
        parts, tester = ("emit", front.wire, front.k.obs), front.k
    elif isinstance(front, ExpectResponse) and front.at is not None and front.rest is not None:
        parts, tester = ("expect", front.pkt, front.rest), front.at
    else:
        return None
    names: dict[int, int] = {}
    try:
        body = _canon(parts, names)
    except _Unkeyed:
        return None
    infos = tuple(tester.store.tags[vid] for vid in names)
    return body, tuple(sorted(tester.connmap.fwd.items())), infos, tester.strict_status


def unifier(
    o: Model, connmap: ConnMap = ConnMap(), store: ConstraintStore = EMPTY, *, strict_status: bool = False
) -> Tester:
    return Tester(o, connmap, store, strict_status)


def derive(m: Model, *, strict_status: bool = False) -> Tester:
    """The tester for a client-side model ``m``."""
    return unifier(dualize(m), strict_status=strict_status)
