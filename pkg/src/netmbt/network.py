"""Network model for concurrent TCP connections and its composition with a server.

The network is itself a nondeterministic model: at every cycle it either
absorbs a packet or emits the oldest in-flight packet of some connection.
Each direction of a connection is an independent FIFO stream; there is no
ordering between different streams.

:func:`compose` glues a network model to a server model. Packets the server
sends go to an outgoing buffer that the network drains before it listens to
clients; packets the network delivers toward the server go to an incoming
buffer the server reads from. The network is stepped only when the server is
blocked on a receive, which keeps the set of live explanations finite between
two externally visible events.

With ``reduce`` on (the default) the composition also skips interleavings
that only differ from another by when an invisible step happened:

* the network never emits while server output is still waiting to be
  absorbed (absorbing first commutes with the emit);
* after a silent delivery to the server, the next visible event must be the
  emission of the packet the server produced last; any other visible event
  could have happened before the delivery instead.

Both rules keep the set of observable traces intact; only redundant
explanations are pruned, which keeps the tester's live branch set small.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any

from .model import (
    Branch,
    Failed,
    Halt,
    Internal,
    Model,
    NewSymbol,
    WantRecv,
    WantSend,
    keyed,
    or_,
    pick_one,
    recv,
    send,
)

DEFAULT_BUFFER_CAP = 64
DEFAULT_NET_STEP_BOUND = 1_000
PRUNED = "redundant interleaving"


class Origin(enum.Enum):
    CLIENT = "client"
    SERVER = "server"


@dataclass(frozen=True, order=True)
class Mcid:
    """Model-level connection identifier."""

    id: int
    origin: Origin = Origin.CLIENT

    @property
    def server_created(self) -> bool:
        return self.origin is Origin.SERVER

    def __str__(self) -> str:
        return f"{'s' if self.server_created else 'c'}{self.id}"


@dataclass(frozen=True)
class Packet:
    conn: Mcid
    to_server: bool
    payload: Any

    @property
    def stream(self) -> tuple[Mcid, bool]:
        return (self.conn, self.to_server)

    def __str__(self) -> str:
        arrow = "->" if self.to_server else "<-"
        summary = getattr(self.payload, "summary", None)
        return f"{self.conn}{arrow} {summary() if summary else self.payload}"


def _stream_key(stream: tuple[Mcid, bool]) -> tuple:
    conn, to_server = stream
    return (conn.origin.value, conn.id, not to_server)


def oldest_in_each_conn(buffer: tuple[Packet, ...]) -> list[Packet]:
    heads: dict[tuple[Mcid, bool], Packet] = {}
    for pkt in buffer:
        heads.setdefault(pkt.stream, pkt)
    return [heads[s] for s in sorted(heads, key=_stream_key)]


def _remove_first(buffer: tuple[Packet, ...], pkt: Packet) -> tuple[Packet, ...]:
    idx = buffer.index(pkt)
    return buffer[:idx] + buffer[idx + 1:]


def tcp(buffer: tuple[Packet, ...] = ()) -> Model:
    """The reordering network: ``or(absorb, emit)`` over a buffer of packets."""
    absorb = recv(lambda pkt: tcp(buffer + (pkt,)))
    if not buffer:
        # Nothing to emit; the emit branch would collapse to absorb anyway.
        return keyed(absorb, ("tcp", buffer))
    emit = pick_one(
        oldest_in_each_conn(buffer),
        lambda pkt: send(pkt, tcp(_remove_first(buffer, pkt))),
    )
    return keyed(or_(absorb, emit), ("tcp", buffer))


@dataclass(frozen=True)
class Composition:
    net: Model
    bi: tuple[Packet, ...] = ()
    bo: tuple[Packet, ...] = ()
    srv: Model | None = None
    net_steps: int = 0
    cap: int = DEFAULT_BUFFER_CAP
    net_bound: int = DEFAULT_NET_STEP_BOUND
    reduce: bool = True
    # since the last visible event: did a packet reach the server, and what
    # did the server send most recently
    delivered: bool = False
    last_out: Packet | None = None


def compose(
    net: Model,
    bi: tuple[Packet, ...],
    bo: tuple[Packet, ...],
    srv: Model,
    *,
    cap: int = DEFAULT_BUFFER_CAP,
    net_bound: int = DEFAULT_NET_STEP_BOUND,
    reduce: bool = True,
) -> Model:
    return _composed(Composition(net, bi, bo, srv, 0, cap, net_bound, reduce))


def _composed(c: Composition) -> Model:
    key = None
    if c.net.key is not None and c.srv.key is not None:
        key = ("compose", c.net, c.bi, c.bo, c.srv, c.net_steps, c.cap, c.net_bound, c.reduce, c.delivered, c.last_out)
    return Model(lambda: _compose_step(c), "compose", key)


def _with(c: Composition, **changes: Any) -> Model:
    return _composed(replace(c, **changes))


def _step_net(c: Composition) -> Any:
    if c.net_steps >= c.net_bound:
        return Failed("network made too many consecutive silent steps")
    s = c.net.step()
    n = c.net_steps + 1
    if isinstance(s, Internal):
        return Internal(_with(c, net=s.k, net_steps=n))
    if isinstance(s, WantSend):
        pkt = s.pkt
        if c.reduce and c.bo:
            return Failed(PRUNED)
        if pkt.to_server:
            if len(c.bi) >= c.cap:
                return Failed("incoming buffer overflow")
            return Internal(_with(c, net=s.k, bi=c.bi + (pkt,), net_steps=n, delivered=True))
        # Toward a client: externally visible.
        if c.reduce and c.delivered and pkt != c.last_out:
            return Failed(PRUNED)
        return WantSend(pkt, _with(c, net=s.k, net_steps=0, delivered=False, last_out=None))
    if isinstance(s, WantRecv):
        if c.bo:
            return Internal(_with(c, net=s.k(c.bo[0]), bo=c.bo[1:], net_steps=n))
        if c.reduce and c.delivered:
            return Failed(PRUNED)
        k = s.k
        return WantRecv(lambda pkt: _with(c, net=k(pkt), net_steps=0, delivered=False, last_out=None))
    if isinstance(s, Branch):
        return Branch(s.cond, _with(c, net=s.then, net_steps=n), _with(c, net=s.orelse, net_steps=n))
    if isinstance(s, NewSymbol):
        k = s.k
        return NewSymbol(s.kind, lambda v: _with(c, net=k(v), net_steps=n))
    return s  # Failed / Halt


def _compose_step(c: Composition) -> Any:
    s = c.srv.step()
    if isinstance(s, Internal):
        return Internal(_with(c, srv=s.k))
    if isinstance(s, WantSend):
        if len(c.bo) >= c.cap:
            return Failed("outgoing buffer overflow")
        return Internal(_with(c, bo=c.bo + (s.pkt,), srv=s.k, net_steps=0, last_out=s.pkt))
    if isinstance(s, WantRecv):
        if c.bi:
            return Internal(_with(c, bi=c.bi[1:], srv=s.k(c.bi[0]), net_steps=0))
        return _step_net(c)
    if isinstance(s, Branch):
        return Branch(s.cond, _with(c, srv=s.then), _with(c, srv=s.orelse))
    if isinstance(s, NewSymbol):
        k = s.k
        return NewSymbol(s.kind, lambda v: _with(c, srv=k(v)))
    if isinstance(s, (Failed, Halt)):
        return s
    raise TypeError(f"unexpected server step {s!r}")
