from hypothesis import given, settings
from hypothesis import strategies as st

from netmbt.codec import encode, make_request, make_response
from netmbt.derive import (
    ConnMap,
    Determine,
    EmitRequest,
    ExpectResponse,
    Generate,
    derive,
)
from netmbt.executor import Accept, Budgets, run
from netmbt.harness.scripted import Emit, Expect, ScriptedEndpoint
from netmbt.httpmodel import ModelResponse, proxy
from netmbt.model import Failed, Halt, branch, fresh, halt, recv, send
from netmbt.network import Mcid, Origin, Packet
from netmbt.symbolic import ETag, Kind, Lit, StrongMatch, Var
from netmbt.wire import Pcid, Wire

M1 = make_request("GET", "/x")
M2 = make_request("GET", "/y")
S1 = Mcid(1, Origin.SERVER)


def test_guard_mismatch_fails():
    t = derive(send(Packet(Mcid(1), False, make_response(200, body=b"a")), halt()))
    front = t.step()
    assert isinstance(front, ExpectResponse)
    s = front.k(Wire(Pcid(1), make_response(200, body=b"b"))).step()
    assert isinstance(s, Failed) and s.reason.startswith("Unexpected payload")


def test_guard_304_vs_200_is_payload_failure():
    t = derive(send(Packet(Mcid(1), False, ModelResponse(304)), halt()))
    s = t.step().k(Wire(Pcid(1), make_response(200, etag=ETag("a")))).step()
    assert isinstance(s, Failed) and "Unexpected payload" in s.reason


def test_symbolic_branch_becomes_determine_with_unify():
    def model(v):
        cond = StrongMatch(Lit(ETag("t")), Var(v))
        ok = send(Packet(Mcid(1), False, ModelResponse(204)), halt())
        no = send(Packet(Mcid(1), False, ModelResponse(412)), halt())
        return branch(cond, ok, no)

    front = derive(fresh(Kind.TAG, model)).step()
    assert isinstance(front, Determine)
    yes, no = front.first.step(), front.second.step()
    assert isinstance(yes, ExpectResponse) and isinstance(no, ExpectResponse)
    # the matched side has learned the tag, the other side only excludes it
    assert yes.at.store.tags[0].known == ETag("t")
    assert no.at.store.tags[0].known is None and ETag("t") in no.at.store.tags[0].excluded


def test_proxy_dual_emits_then_expects_forward():
    g = derive(proxy()).step()
    assert isinstance(g, Generate)
    e = g.k(Wire(Pcid(1), M1)).step()
    assert isinstance(e, EmitRequest) and e.wire == Wire(Pcid(1), M1)
    x = e.k.step()
    assert isinstance(x, ExpectResponse) and x.pkt.payload == M1 and x.pkt.conn == S1
    # the guard runs when the tester is next stepped; p7 is then bound to s1
    g2 = x.k(Wire(Pcid(7, True), M1)).step()
    assert isinstance(g2, Generate)
    reply = make_response(200, etag=ETag("o"), body=b"o")
    back = g2.k(Wire(Pcid(7, True), reply)).step()
    assert isinstance(back, EmitRequest) and back.k.connmap.fwd == {S1: Pcid(7, True)}
    assert isinstance(g2.k(Wire(Pcid(9, True), reply)).step(), Failed)


def test_connection_conflict_in_one_branch():
    m = send(Packet(S1, False, M1), send(Packet(S1, False, M2), halt()))
    second = derive(m).step().k(Wire(Pcid(7, True), M1)).step()
    assert second.at.connmap.get(S1) == Pcid(7, True)
    s = second.k(Wire(Pcid(9, True), M2)).step()
    assert isinstance(s, Failed) and s.reason.startswith("Unexpected connection")
    assert isinstance(second.k(Wire(Pcid(7, True), M2)).step(), Halt)


def test_server_created_connection_cannot_bind_client_pcid():
    t = derive(send(Packet(S1, False, M1), halt())).step().k(Wire(Pcid(1), M1))
    assert isinstance(t.step(), Failed)


def test_connmap_is_injective():
    cm = ConnMap().bind(S1, Pcid(7, True))
    assert cm.bind(S1, Pcid(7, True)) is cm
    assert cm.bind(S1, Pcid(8, True)) is None
    assert cm.bind(Mcid(2, Origin.SERVER), Pcid(7, True)) is None
    cm2 = cm.bind(Mcid(2, Origin.SERVER), Pcid(8, True))
    assert len(cm2) == 2 and len(set(cm2.fwd.values())) == 2


def test_lenient_and_strict_2xx():
    model = send(Packet(Mcid(1), False, ModelResponse(204, None)), halt())
    got = Wire(Pcid(1), make_response(200))
    assert isinstance(derive(model).step().k(got).step(), Halt)
    assert isinstance(derive(model, strict_status=True).step().k(got).step(), Failed)


# -- a deterministic model tests its own mirror ------------------------------

REQS = [make_request("GET", p) for p in ("/a", "/b", "/c")]
RESPS = [make_response(s, body=b) for s, b in ((200, b"x"), (404, b""), (200, b"yz"))]
events = st.lists(st.tuples(st.sampled_from(["recv", "send"]), st.integers(0, 2)), min_size=1, max_size=8)


def linear_model(evs):
    m = halt()
    for kind, i in reversed(evs):
        if kind == "send":
            m = send(Packet(Mcid(1), False, RESPS[i]), m)
        else:
            m = (lambda rest: recv(lambda _pkt: rest))(m)
    return m


@settings(max_examples=200, deadline=None)
@given(events)
def test_faithful_endpoint_is_accepted(evs):
    script = [
        Expect(Pcid(1), encode(REQS[i])) if kind == "recv" else Emit(Pcid(1), encode(RESPS[i]))
        for kind, i in evs
    ]
    ep = ScriptedEndpoint(script, clients=[Pcid(1)])
    v = run(derive(linear_model(evs)), ep, ep.generator(), Budgets(max_steps=len(evs) + 1, retries=3))
    assert isinstance(v, Accept)
    # sends and receives swap sides, one for one
    assert sum(r.direction == "send" for r in v.trace) == sum(k == "recv" for k, _ in evs)
    assert sum(r.direction == "recv" for r in v.trace) == sum(k == "send" for k, _ in evs)
