from collections import defaultdict

from netmbt.codec import make_request
from netmbt.derive import _canon
from netmbt.httpmodel import ServerState, http_server
from netmbt.model import Branch, Failed, Halt, Internal, NewSymbol, WantRecv, WantSend, step
from netmbt.network import Mcid, Packet, compose, oldest_in_each_conn, tcp
from netmbt.symbolic import EMPTY, ETag, Lit, assert_bool, new_var

A1 = Packet(Mcid(1), True, "a1")
A2 = Packet(Mcid(1), True, "a2")
B1 = Packet(Mcid(2), True, "b1")

STATE = ServerState({"/a": b"alpha", "/b": b"bravo"}, {"/a": Lit(ETag("ta")), "/b": Lit(ETag("tb"))})
REQUESTS = [
    make_request("GET", "/a"),
    make_request("GET", "/a", if_none_match=ETag("ta")),
    make_request("PUT", "/a", if_match=ETag("ta"), body=b"new"),
]


def enumerate_traces(m, inputs, depth, *, may_send=lambda trace: True):
    """Observable traces of ``m`` up to ``depth`` events over an input alphabet.

    Returns the trace set and the set of step kinds seen. Symbolic tags in the
    trace are renamed by first appearance, so equal traces compare equal
    however the variables were numbered.
    """
    traces, kinds, seen = set(), set(), set()
    stack = [(m, (), EMPTY)]
    while stack:
        m, trace, store = stack.pop()
        if m.key is not None:
            names: dict = {}
            key = (_canon((trace, m), names), tuple(store.tags.get(v) for v in names))
            if key in seen:
                continue
            seen.add(key)
        s = step(m)
        kinds.add(type(s).__name__)
        if isinstance(s, NewSymbol):
            v, store2 = new_var(store, s.kind)
            stack.append((s.k(v), trace, store2))
        elif isinstance(s, Branch):
            for value, nxt in ((True, s.then), (False, s.orelse)):
                store2 = assert_bool(s.cond, value, store)
                if store2 is not None:
                    stack.append((nxt, trace, store2))
        elif isinstance(s, (Failed, Halt)) or len(trace) >= depth:
            continue
        elif isinstance(s, WantSend):
            t2 = trace + (("out", s.pkt),)
            traces.add(_canon(t2, {}))
            stack.append((s.k, t2, store))
        elif isinstance(s, WantRecv):
            if not may_send(trace):
                continue
            for pkt in inputs:
                t2 = trace + (("in", pkt),)
                traces.add(_canon(t2, {}))
                stack.append((s.k(pkt), t2, store))
    return traces, kinds


def test_emit_candidates_are_oldest_per_connection():
    assert oldest_in_each_conn((A1, A2, B1)) == [A1, B1]
    assert A2 not in oldest_in_each_conn((A1, A2, B1))


def test_empty_buffer_only_absorbs():
    assert isinstance(step(tcp()), WantRecv)
    assert isinstance(step(tcp((A1,))), NewSymbol)


def test_single_connection_network_is_fifo():
    traces, _ = enumerate_traces(tcp(), [A1, A2], 4)
    for t in traces:
        ins = [p for d, p in t if d == "in"]
        outs = [p for d, p in t if d == "out"]
        assert outs == ins[: len(outs)]


def test_one_connection_composition_matches_server_alone():
    inputs = [Packet(Mcid(1), True, r) for r in REQUESTS]
    depth = 8
    # one request in flight at a time: the client waits for each response
    wait = lambda t: not t or t[-1][0] == "out"  # noqa: E731
    alone, _ = enumerate_traces(http_server(STATE), inputs, depth, may_send=wait)
    composed, kinds = enumerate_traces(compose(tcp(), (), (), http_server(STATE)), inputs, depth, may_send=wait)
    assert alone == composed
    assert len(alone) > 100
    assert kinds <= {"WantRecv", "WantSend", "Branch", "NewSymbol", "Internal", "Failed"}


def test_composition_keeps_each_connection_in_order():
    inputs = [
        Packet(Mcid(1), True, make_request("GET", "/a")),
        Packet(Mcid(1), True, make_request("GET", "/b")),
        Packet(Mcid(2), True, make_request("GET", "/a")),
    ]
    traces, _ = enumerate_traces(compose(tcp(), (), (), http_server(STATE)), inputs, 5)
    reordered = False
    for t in traces:
        # canonical packets are ("pkt", conn, to_server, payload)
        sent, got = defaultdict(list), defaultdict(list)
        for d, (_, conn, _, payload) in t:
            (sent if d == "in" else got)[conn].append(payload)
        for conn, responses in got.items():
            expected = [STATE.data[req.target] for req in sent[conn][: len(responses)]]
            assert [body for _, _, _, body in responses] == expected
        outs = [p[1] for d, p in t if d == "out"]
        ins = [p[1] for d, p in t if d == "in"]
        if len(outs) == 2 and outs[0] != ins[0] and len(set(ins[:2])) == 2:
            reordered = True
    assert reordered  # responses may overtake each other across connections


def test_reduction_keeps_observable_traces():
    inputs = [Packet(Mcid(c), True, make_request("GET", "/a")) for c in (1, 2)]
    for depth in (3, 4):
        full, _ = enumerate_traces(compose(tcp(), (), (), http_server(STATE), reduce=False), inputs, depth)
        reduced, _ = enumerate_traces(compose(tcp(), (), (), http_server(STATE)), inputs, depth)
        assert full == reduced


def test_buffer_cap_turns_overflow_into_failure():
    m = compose(tcp(), (), (), http_server(STATE), cap=1)
    inputs = [Packet(Mcid(1), True, make_request("GET", "/a"))]
    _, kinds = enumerate_traces(m, inputs, 6)
    assert "Failed" in kinds
