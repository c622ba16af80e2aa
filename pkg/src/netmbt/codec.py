"""HTTP/1.1 wire subset: request/response values, encoding, incremental decoding.

Only what the models talk about is interpreted (Host, Content-Length, ETag,
If-Match, If-None-Match); other headers are carried through untouched so the
tester can talk to real servers that add Date, Server and friends.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .symbolic import ETag

REASONS = {
    200: "OK",
    201: "Created",
    204: "No Content",
    304: "Not Modified",
    400: "Bad Request",
    404: "Not Found",
    412: "Precondition Failed",
    500: "Internal Server Error",
}

Headers = tuple[tuple[str, str], ...]

_TOKEN = re.compile(rb"^[!#$%&'*+.^_`|~0-9A-Za-z-]+$")
_REQUEST_LINE = re.compile(rb"^([!#$%&'*+.^_`|~0-9A-Za-z-]+) (\S+) HTTP/1\.[01]$")
_STATUS_LINE = re.compile(rb"^HTTP/1\.[01] (\d{3})(?: (.*))?$")


class MalformedMessage(ValueError):
    pass


def _lookup(headers: Headers, name: str) -> Optional[str]:
    name = name.lower()
    for k, v in headers:
        if k.lower() == name:
            return v
    return None


def _etag_header(headers: Headers, name: str) -> Optional[ETag]:
    value = _lookup(headers, name)
    return None if value is None else ETag.parse(value)


def _check_length(headers: Headers, body: bytes) -> None:
    cl = _lookup(headers, "Content-Length")
    if cl is not None and cl.strip() != str(len(body)):
        raise ValueError(f"Content-Length {cl} does not match body of {len(body)} bytes")


def body_forbidden(status: int) -> bool:
    return 100 <= status < 200 or status in (204, 304)


@dataclass(frozen=True)
class HttpRequest:
    method: str
    target: str
    headers: Headers = ()
    body: bytes = b""

    def __post_init__(self) -> None:
        _check_length(self.headers, self.body)

    def header(self, name: str) -> Optional[str]:
        return _lookup(self.headers, name)

    @property
    def if_match(self) -> Optional[ETag]:
        return _etag_header(self.headers, "If-Match")

    @property
    def if_none_match(self) -> Optional[ETag]:
        return _etag_header(self.headers, "If-None-Match")

    def summary(self) -> str:
        parts = [self.method, self.target]
        for name in ("If-Match", "If-None-Match"):
            value = self.header(name)
            if value is not None:
                parts.append(f"{name}: {value}")
        if self.body:
            parts.append(f"body={self.body!r}")
        return " ".join(parts)


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: Headers = ()
    body: bytes = b""
    reason: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if body_forbidden(self.status) and self.body:
            raise ValueError(f"status {self.status} cannot carry a body")
        if not body_forbidden(self.status):
            _check_length(self.headers, self.body)

    def header(self, name: str) -> Optional[str]:
        return _lookup(self.headers, name)

    @property
    def etag(self) -> Optional[ETag]:
        return _etag_header(self.headers, "ETag")

    def summary(self) -> str:
        parts = [str(self.status)]
        value = self.header("ETag")
        if value is not None:
            parts.append(f"ETag: {value}")
        if self.body:
            parts.append(f"body={self.body!r}")
        return " ".join(parts)


Message = Union[HttpRequest, HttpResponse]


def make_request(
    method: str,
    target: str,
    *,
    if_match: Optional[ETag] = None,
    if_none_match: Optional[ETag] = None,
    body: bytes = b"",
    host: Optional[str] = "localhost",
) -> HttpRequest:
    headers: list[tuple[str, str]] = []
    if host is not None:
        headers.append(("Host", host))
    if if_match is not None:
        headers.append(("If-Match", str(if_match)))
    if if_none_match is not None:
        headers.append(("If-None-Match", str(if_none_match)))
    if body or method == "PUT":
        headers.append(("Content-Length", str(len(body))))
    return HttpRequest(method, target, tuple(headers), body)


def make_response(status: int, *, etag: Optional[ETag] = None, body: bytes = b"") -> HttpResponse:
    headers: list[tuple[str, str]] = []
    if etag is not None:
        headers.append(("ETag", str(etag)))
    if not body_forbidden(status):
        headers.append(("Content-Length", str(len(body))))
    return HttpResponse(status, tuple(headers), body, REASONS.get(status, ""))


def encode(msg: Message) -> bytes:
    if isinstance(msg, HttpRequest):
        start = f"{msg.method} {msg.target} HTTP/1.1"
    else:
        reason = msg.reason or REASONS.get(msg.status, "")
        start = f"HTTP/1.1 {msg.status} {reason}"
    lines = [start] + [f"{k}: {v}" for k, v in msg.headers]
    return ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + msg.body


def _bare_lf(buf: bytes) -> bool:
    idx = buf.find(b"\n")
    while idx != -1:
        if idx == 0 or buf[idx - 1] != 0x0D:
            return True
        idx = buf.find(b"\n", idx + 1)
    return False


def decode(buf: bytes) -> Optional[tuple[Message, bytes]]:
    """Decode one message from the front of ``buf``.

    Returns ``(message, remaining)``, or None if ``buf`` is a strict prefix of
    a message. Raises :class:`MalformedMessage` otherwise.
    """
    end = buf.find(b"\r\n\r\n")
    head = buf if end == -1 else buf[:end]
    if _bare_lf(head):
        raise MalformedMessage("bare LF line ending")
    if end == -1:
        return None

    start, *raw_headers = head.split(b"\r\n")
    headers: list[tuple[str, str]] = []
    for line in raw_headers:
        name, sep, value = line.partition(b":")
        if not sep or not _TOKEN.match(name):
            raise MalformedMessage(f"bad header line {line!r}")
        headers.append((name.decode("latin-1"), value.strip(b" \t").decode("latin-1")))
    hdrs = tuple(headers)

    lengths = {v.strip() for k, v in hdrs if k.lower() == "content-length"}
    if len(lengths) > 1:
        raise MalformedMessage("conflicting Content-Length headers")
    length = 0
    if lengths:
        (cl,) = lengths
        if not cl.isdigit():
            raise MalformedMessage(f"bad Content-Length {cl!r}")
        length = int(cl)

    body_start = end + 4
    if start.startswith(b"HTTP/"):
        m = _STATUS_LINE.match(start)
        if not m:
            raise MalformedMessage(f"bad status line {start!r}")
        status = int(m.group(1))
        reason = (m.group(2) or b"").decode("latin-1")
        if body_forbidden(status):
            length = 0
        if len(buf) < body_start + length:
            return None
        body = buf[body_start:body_start + length]
        try:
            msg: Message = HttpResponse(status, hdrs, body, reason)
        except ValueError as exc:
            raise MalformedMessage(str(exc)) from None
    else:
        m = _REQUEST_LINE.match(start)
        if not m:
            raise MalformedMessage(f"bad request line {start!r}")
        if len(buf) < body_start + length:
            return None
        body = buf[body_start:body_start + length]
        msg = HttpRequest(m.group(1).decode("ascii"), m.group(2).decode("latin-1"), hdrs, body)
    return msg, buf[body_start + length:]


class StreamDecoder:
    """Accumulates bytes from one connection and yields whole messages."""

    def __init__(self) -> None:
        self._buf = b""

    def feed(self, data: bytes) -> list[tuple[Message, bytes]]:
        """Returns ``(message, raw bytes)`` for every message completed by ``data``."""
        self._buf += data
        out = []
        while self._buf:
            result = decode(self._buf)
            if result is None:
                break
            msg, rest = result
            out.append((msg, self._buf[: len(self._buf) - len(rest)]))
            self._buf = rest
        return out

    @property
    def pending(self) -> bytes:
        return self._buf
