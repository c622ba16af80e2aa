import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmbt.codec import (
    HttpRequest,
    HttpResponse,
    MalformedMessage,
    StreamDecoder,
    decode,
    encode,
    make_request,
    make_response,
)
from netmbt.symbolic import ETag

INM_GET = b'GET /target HTTP/1.1\r\nHost: localhost\r\nIf-None-Match: "tag-foo"\r\n\r\n'


def test_conditional_get_bytes():
    req = make_request("GET", "/target", if_none_match=ETag("tag-foo"))
    assert encode(req) == INM_GET
    assert decode(INM_GET) == (req, b"")
    assert req.if_none_match == ETag("tag-foo")


def test_304_bytes():
    assert encode(make_response(304)) == b"HTTP/1.1 304 Not Modified\r\n\r\n"
    assert encode(make_response(304, etag=ETag("x"))) == b'HTTP/1.1 304 Not Modified\r\nETag: "x"\r\n\r\n'


def test_partial_input_needs_more():
    raw = encode(make_response(200, etag=ETag("a"), body=b"hello"))
    for cut in range(len(raw)):
        assert decode(raw[:cut]) is None


def test_pipelined_requests():
    a = make_request("PUT", "/a", if_match=ETag("t", True), body=b"xyz")
    b = make_request("GET", "/b")
    msg, rest = decode(encode(a) + encode(b))
    assert msg == a and rest == encode(b)
    dec = StreamDecoder()
    assert dec.feed(encode(a)[:7]) == []
    got = dec.feed(encode(a)[7:] + encode(b))
    assert [m for m, _ in got] == [a, b]
    assert got[1][1] == encode(b)


def test_unknown_headers_preserved():
    raw = b"HTTP/1.1 200 OK\r\nServer: x\r\nContent-Length: 2\r\nDate: now\r\n\r\nhi"
    msg, _ = decode(raw)
    assert msg.header("server") == "x" and msg.header("Date") == "now"
    assert encode(msg) == raw


def test_reason_phrase_not_significant():
    a, _ = decode(b"HTTP/1.1 404 Nope\r\nContent-Length: 0\r\n\r\n")
    assert a == make_response(404)


@pytest.mark.parametrize(
    "raw",
    [
        b"GET /a\r\n\r\n",
        b"GET /a HTTP/1.1\nHost: x\r\n\r\n",
        b"GET /a HTTP/1.1\r\nContent-Length: x\r\n\r\n",
        b"GET /a HTTP/1.1\r\nContent-Length: 1\r\nContent-Length: 2\r\n\r\n",
        b"HTTP/1.1 2000 OK\r\n\r\n",
        b"GET /a HTTP/1.1\r\nno colon\r\n\r\n",
    ],
)
def test_malformed(raw):
    with pytest.raises(MalformedMessage):
        decode(raw)


def test_invariants():
    with pytest.raises(ValueError):
        HttpResponse(304, (), b"body")
    with pytest.raises(ValueError):
        HttpRequest("PUT", "/a", (("Content-Length", "5"),), b"ab")


def test_bad_etag_header_raises_on_access():
    req = HttpRequest("GET", "/a", (("If-None-Match", "unquoted"),))
    with pytest.raises(ValueError):
        req.if_none_match


opaque = st.text(alphabet="abcxyz0123-", min_size=0, max_size=6)
tags = st.builds(ETag, opaque, st.booleans())
paths = st.from_regex(r"/[a-z0-9~-]{0,8}", fullmatch=True)
bodies = st.binary(max_size=20)


@st.composite
def messages(draw):
    if draw(st.booleans()):
        method = draw(st.sampled_from(["GET", "PUT"]))
        return make_request(
            method,
            draw(paths),
            if_match=draw(st.none() | tags),
            if_none_match=draw(st.none() | tags),
            body=draw(bodies) if method == "PUT" else b"",
        )
    status = draw(st.sampled_from([200, 201, 204, 304, 404, 412]))
    body = b"" if status in (204, 304) else draw(bodies)
    return make_response(status, etag=draw(st.none() | tags), body=body)


@settings(max_examples=500)
@given(messages())
def test_round_trip(m):
    assert decode(encode(m)) == (m, b"")


@settings(max_examples=300)
@given(messages(), st.binary(max_size=30))
def test_decode_stops_at_message_end(m, tail):
    assert decode(encode(m) + tail)[1] == tail
