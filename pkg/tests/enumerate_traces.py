"""Exhaustive trace enumeration used by the cross-check tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from netmbt.codec import make_request, make_response
from netmbt.derive import derive
from netmbt.executor import RECV, SEND, Replayer
from netmbt.httpmodel import symbolic_server
from netmbt.oracle import OracleAccept, check_exchange, initial_state
from netmbt.symbolic import ETag
from netmbt.wire import Pcid, Wire

SMALL_DATA = {"/a": b"alpha", "/b": b"bravo"}
REQUEST_TAGS = (ETag("a"), ETag("b"))
RESPONSE_TAGS = (ETag("a"), ETag("b"), ETag("c"))
NEW_VALUE = b"v1"
C1 = Pcid(1)


def single_connection_exchanges():
    """The alphabet of (request, response) pairs for the oracle comparison."""
    out = []
    for path in sorted(SMALL_DATA):
        bodies = (SMALL_DATA[path], NEW_VALUE)
        for t in REQUEST_TAGS:
            get = make_request("GET", path, if_none_match=t)
            out.append((get, make_response(304)))
            for tag in RESPONSE_TAGS:
                for body in bodies:
                    out.append((get, make_response(200, etag=tag, body=body)))
            put = make_request("PUT", path, if_match=t, body=NEW_VALUE)
            for tag in RESPONSE_TAGS:
                out.append((put, make_response(204, etag=tag)))
            out.append((put, make_response(412)))
    return out


@dataclass
class Disagreement:
    exchanges: list
    oracle: bool
    tester: bool


@dataclass
class Tally:
    traces: int = 0
    accepted: int = 0
    disagreements: list = None

    def __post_init__(self):
        self.disagreements = self.disagreements or []


def compare_with_oracle(depth: int = 3, *, complete: bool = True) -> Tally:
    """Depth-first over all exchange sequences; both checkers are prefix-closed,
    so a rejected prefix is not extended."""
    alphabet = single_connection_exchanges()
    tally = Tally()
    tester0 = Replayer.start(derive(symbolic_server(SMALL_DATA)))

    def go(prefix, ost, rep, d):
        if d == depth:
            return
        for req, resp in alphabet:
            tally.traces += 1
            o = check_exchange(req, resp, ost, complete=complete)
            r = rep.feed(SEND, Wire(C1, req))
            if r.alive:
                r = r.feed(RECV, Wire(C1, resp))
            oracle_ok = not isinstance(o, str)
            if oracle_ok != r.alive:
                tally.disagreements.append(Disagreement(prefix + [(req, resp)], oracle_ok, r.alive))
            if oracle_ok and r.alive:
                tally.accepted += 1
                go(prefix + [(req, resp)], o, r, d + 1)

    go([], initial_state(SMALL_DATA), tester0, 0)
    return tally


# -- proxy over the reordering network ---------------------------------------

from netmbt.derive import _canon  # noqa: E402
from netmbt.executor import TraceLog, replay_check  # noqa: E402
from netmbt.httpmodel import ProxyState, proxy  # noqa: E402
from netmbt.model import Branch, Failed, Halt, Internal, NewSymbol, WantRecv, WantSend  # noqa: E402
from netmbt.network import Mcid, Origin, Packet, compose, tcp  # noqa: E402
from netmbt.symbolic import Kind, SymVar  # noqa: E402

CLIENT_MESSAGES = {
    Pcid(1): make_request("GET", "/x"),
    Pcid(2): make_request("GET", "/y"),
}


def origin_reply(i: int):
    return make_response(200, etag=ETag(f"o{i}"), body=f"o{i}".encode())


def proxy_model(*, reduce: bool):
    return compose(tcp(), (), (), proxy(ProxyState()), reduce=reduce)


def model_traces(depth: int, *, reduce: bool) -> set:
    """Every client-side trace of length <= depth the composed proxy model can
    exhibit, with server-created connections numbered by first appearance."""
    traces: set = set()
    seen: set = set()
    # (model, trace, mcid -> sut pcid id, responded sut ids, symbol counter)
    work = [(proxy_model(reduce=reduce), (), (), frozenset(), 0)]
    while work:
        m, trace, conns, answered, nsym = work.pop()
        s = m.step()
        if isinstance(s, Internal):
            work.append((s.k, trace, conns, answered, nsym))
        elif isinstance(s, Branch):
            work.append((s.then, trace, conns, answered, nsym))
            work.append((s.orelse, trace, conns, answered, nsym))
        elif isinstance(s, NewSymbol):
            work.append((s.k(SymVar(nsym, s.kind)), trace, conns, answered, nsym + 1))
        elif isinstance(s, (Failed, Halt)):
            continue
        elif len(trace) >= depth:
            continue
        elif isinstance(s, WantSend):
            pkt = s.pkt
            cmap = dict(conns)
            if pkt.conn.server_created:
                if pkt.conn not in cmap:
                    cmap[pkt.conn] = len(cmap) + 1
                pcid = Pcid(cmap[pkt.conn], True)
            else:
                pcid = Pcid(pkt.conn.id)
            t2 = trace + ((RECV, pcid, pkt.payload),)
            traces.add(t2)
            key = (t2, _canon(s.k.key, {}) if s.k.key is not None else id(s.k))
            if key not in seen:
                seen.add(key)
                work.append((s.k, t2, tuple(sorted(cmap.items())), answered, nsym))
        elif isinstance(s, WantRecv):
            sent = {pcid for d, pcid, _ in trace if d == SEND}
            inputs = []
            for pcid, msg in CLIENT_MESSAGES.items():
                if pcid not in sent:
                    inputs.append((Packet(Mcid(pcid.id, Origin.CLIENT), True, msg), pcid, msg))
            for mcid, i in conns:
                if i not in answered:
                    inputs.append((Packet(mcid, True, origin_reply(i)), Pcid(i, True), origin_reply(i)))
            for pkt, pcid, msg in inputs:
                nxt = s.k(pkt)
                t2 = trace + ((SEND, pcid, msg),)
                traces.add(t2)
                ans = answered | {pcid.id} if pcid.sut_initiated else answered
                key = (t2, _canon(nxt.key, {}) if nxt.key is not None else id(nxt))
                if key not in seen:
                    seen.add(key)
                    work.append((nxt, t2, conns, ans, nsym))
    return traces


def tester_traces(depth: int, tester) -> tuple[set, int]:
    """Every trace over the proxy alphabet that the tester accepts, found by
    extending accepted traces one event at a time."""
    accepted: set = set()
    frontier = [((), Replayer.start(tester))]
    checked = 0
    while frontier:
        nxt = []
        for trace, rep in frontier:
            if len(trace) >= depth:
                continue
            for ev in _candidate_events(trace):
                checked += 1
                direction, pcid, msg = ev
                r = rep.feed(direction, Wire(pcid, msg))
                if r.alive:
                    t2 = trace + (ev,)
                    accepted.add(t2)
                    nxt.append((t2, r))
        frontier = nxt
    return accepted, checked


def _candidate_events(trace):
    sent = {pcid for d, pcid, _ in trace if d == SEND}
    sut = sorted({pcid.id for _, pcid, _ in trace if pcid.sut_initiated})
    answered = {pcid.id for d, pcid, _ in trace if d == SEND and pcid.sut_initiated}
    events = []
    for pcid, msg in CLIENT_MESSAGES.items():
        if pcid not in sent:
            events.append((SEND, pcid, msg))
    for i in sut:
        if i not in answered:
            events.append((SEND, Pcid(i, True), origin_reply(i)))
    messages = list(CLIENT_MESSAGES.values()) + [origin_reply(i) for i in sut]
    pcids = list(CLIENT_MESSAGES) + [Pcid(i, True) for i in sut] + [Pcid(len(sut) + 1, True)]
    for pcid in pcids:
        for msg in messages:
            events.append((RECV, pcid, msg))
    return events


def to_log(trace) -> TraceLog:
    return TraceLog.from_wires((d, Wire(pcid, msg)) for d, pcid, msg in trace)
