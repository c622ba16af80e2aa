"""Symbolic models of an HTTP/1.1 origin server and a forwarding proxy.

The origin server keeps, per path, the stored value and a tag expression for
its current ETag. Tags the server invents when it stores a new
representation are fresh symbolic variables; whether a request's
precondition matches one of them is an ``IF`` branch the tester resolves
from what it later observes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

from .codec import HttpRequest, HttpResponse
from .model import Model, branch, fail, fresh, keyed, lazy, recv, send
from .network import Mcid, Origin, Packet
from .symbolic import ETag, Kind, Lit, StrongMatch, TagExpr, Var, WeakMatch, show

STATUSES = frozenset({200, 201, 204, 304, 404, 412})


@dataclass(frozen=True)
class ModelResponse:
    """A response as the model predicts it.

    ``etag`` may be symbolic; ``body=None`` means the body is not specified.
    """

    status: int
    etag: Optional[TagExpr] = None
    body: Optional[bytes] = None

    def summary(self) -> str:
        parts = [str(self.status)]
        if self.etag is not None:
            parts.append(f"ETag: {show(self.etag)}")
        if self.body:
            parts.append(f"body={self.body!r}")
        return " ".join(parts)


@dataclass(frozen=True)
class ServerState:
    data: Mapping[str, bytes] = field(default_factory=dict)
    xtag: Mapping[str, TagExpr] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.data) != set(self.xtag):
            raise ValueError("data and xtag must cover the same paths")

    def store(self, path: str, value: bytes, tag: TagExpr) -> ServerState:
        return ServerState({**self.data, path: value}, {**self.xtag, path: tag})


Continuation = Callable[[ModelResponse, ServerState], Model]


def _update(req: HttpRequest, st: ServerState, k: Continuation, tag_kind: Kind) -> Model:
    created = req.target not in st.data

    def stored(v):
        st2 = st.store(req.target, req.body, Var(v))
        return k(ModelResponse(201 if created else 204, Var(v)), st2)

    return fresh(tag_kind, stored)


def process(req: HttpRequest, st: ServerState, k: Continuation, *, tag_kind: Kind = Kind.STRONG_TAG) -> Model:
    """Handle one request; ``k`` receives the response and the next state."""
    try:
        if_match, if_none_match = req.if_match, req.if_none_match
    except ValueError:
        return k(ModelResponse(404), st)
    path = req.target
    present = path in st.data

    if req.method == "GET":
        if not present:
            return k(ModelResponse(404), st)
        ok = k(ModelResponse(200, st.xtag[path], st.data[path]), st)
        if if_none_match is None:
            return ok
        return branch(WeakMatch(Lit(if_none_match), st.xtag[path]), k(ModelResponse(304), st), ok)

    if req.method == "PUT":
        if if_match is None and if_none_match is None:
            return _update(req, st, k, tag_kind)
        if not present:
            return k(ModelResponse(412), st)
        failed = k(ModelResponse(412), st)
        if if_match is not None:
            cond = StrongMatch(Lit(if_match), st.xtag[path])
            return branch(cond, _update(req, st, k, tag_kind), failed)
        assert if_none_match is not None
        cond = WeakMatch(Lit(if_none_match), st.xtag[path])
        return branch(cond, failed, _update(req, st, k, tag_kind))

    return k(ModelResponse(404), st)


def http_server(st: ServerState, *, tag_kind: Kind = Kind.STRONG_TAG) -> Model:
    """Serve requests one at a time, from whichever connection they arrive on."""

    def handle(pkt: Packet) -> Model:
        if not pkt.to_server or not isinstance(pkt.payload, HttpRequest):
            return fail(f"server cannot handle {pkt}")

        def respond(resp: ModelResponse, st2: ServerState) -> Model:
            return send(Packet(pkt.conn, False, resp), http_server(st2, tag_kind=tag_kind))

        return process(pkt.payload, st, respond, tag_kind=tag_kind)

    key = ("http", tuple(sorted(st.data.items())), tuple(sorted(st.xtag.items(), key=lambda kv: kv[0])), tag_kind)
    return keyed(recv(handle), key)


def symbolic_server(
    data: Mapping[str, bytes], *, tag_kind: Kind = Kind.STRONG_TAG
) -> Model:
    """An origin server whose initial ETags are unknown to the tester."""
    paths = sorted(data)

    def alloc(i: int, xtag: dict) -> Model:
        if i == len(paths):
            return http_server(ServerState(dict(data), xtag), tag_kind=tag_kind)
        return fresh(tag_kind, lambda v: alloc(i + 1, {**xtag, paths[i]: Var(v)}))

    return lazy(lambda: alloc(0, {}))


# Fixture paths with tags known to both the model and the reference server.
FIXTURE_DATA = {"/a": b"alpha", "/b": b"bravo", "/c": b"charlie"}
FIXTURE_TAGS = {"/a": ETag("tag-a"), "/b": ETag("tag-b"), "/c": ETag("tag-c")}


def fixture_state() -> ServerState:
    return ServerState(dict(FIXTURE_DATA), {p: Lit(t) for p, t in FIXTURE_TAGS.items()})


# -- proxy -------------------------------------------------------------------


@dataclass(frozen=True)
class ProxyState:
    next_id: int = 1
    # server-created mcid -> client mcid awaiting the forwarded response
    pending: Mapping[Mcid, Mcid] = field(default_factory=dict)


def proxy(st: ProxyState = ProxyState()) -> Model:
    """Forward each message immediately upon receiving it.

    Requests from a client go out on a fresh server-created connection toward
    the origin; the origin's response on that connection goes back to the
    client it came from. Payloads are forwarded unchanged.
    """

    def handle(pkt: Packet) -> Model:
        if not pkt.to_server:
            return fail(f"proxy cannot receive {pkt}")
        if not pkt.conn.server_created:
            if not isinstance(pkt.payload, HttpRequest):
                return fail(f"client sent a non-request {pkt}")
            out = Mcid(st.next_id, Origin.SERVER)
            st2 = ProxyState(st.next_id + 1, {**st.pending, out: pkt.conn})
            return send(Packet(out, False, pkt.payload), proxy(st2))
        client = st.pending.get(pkt.conn)
        if client is None or not isinstance(pkt.payload, HttpResponse):
            return fail(f"unexpected packet from origin {pkt}")
        rest = {m: c for m, c in st.pending.items() if m != pkt.conn}
        return send(Packet(client, False, pkt.payload), proxy(replace(st, pending=rest)))

    return keyed(recv(handle), ("proxy", st.next_id, tuple(sorted(st.pending.items()))))
