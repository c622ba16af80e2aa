"""Concrete in-process servers behind the endpoint interface, plus injected bugs."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..codec import HttpRequest, HttpResponse, MalformedMessage, StreamDecoder, encode, make_response
from ..executor import EndpointError
from ..httpmodel import FIXTURE_DATA, FIXTURE_TAGS
from ..symbolic import ETag, strong_compare, weak_compare
from ..wire import Pcid

MUTANTS = {
    "inm-strong": "If-None-Match evaluated with strong comparison",
    "put-skip-precond": "PUT ignores its preconditions",
    "wrong-target-write": "PUT writes to a different path but reports success",
    "no-304": "200 where 304 is due",
    "missing-404": "500 where 404 is due",
    "stale-etag": "PUT response advertises the replaced ETag",
    "swap-304-412": "304 and 412 swapped",
    "body-off-by-one": "200 bodies truncated by one byte",
    "proxy-body-corrupt": "proxy flips one body byte when forwarding",
    "constant-etag": "one fixed ETag for every resource",
}

PROXY_MUTANTS = frozenset({"proxy-body-corrupt"})


def check_mutant(mutant: Optional[str]) -> None:
    if mutant is not None and mutant not in MUTANTS:
        raise ValueError(f"unknown mutant {mutant!r}; choose from {', '.join(MUTANTS)}")


class ReferenceServer:
    """A small conditional-request HTTP/1.1 origin.

    Responses follow the same rules as the model: any precondition on an
    absent target fails, If-Match uses strong comparison and If-None-Match
    weak comparison. Each successful PUT mints a fresh strong ETag.
    """

    CONSTANT_TAG = ETag("same")

    def __init__(
        self,
        data: Optional[dict[str, bytes]] = None,
        tags: Optional[dict[str, ETag]] = None,
        *,
        mutant: Optional[str] = None,
        seed: int = 0,
    ) -> None:
        check_mutant(mutant)
        self.data = dict(FIXTURE_DATA if data is None else data)
        self.tags = dict(FIXTURE_TAGS if tags is None else tags)
        self.mutant = mutant
        self._rng = random.Random(seed)
        if mutant == "constant-etag":
            self.tags = {p: self.CONSTANT_TAG for p in self.tags}

    def _mint(self) -> ETag:
        if self.mutant == "constant-etag":
            return self.CONSTANT_TAG
        return ETag(f"{self._rng.getrandbits(32):08x}")

    def _inm_matches(self, given: ETag, current: ETag) -> bool:
        if self.mutant == "inm-strong":
            return strong_compare(given, current)
        return weak_compare(given, current)

    def _respond(self, status: int, etag: Optional[ETag] = None, body: bytes = b"") -> HttpResponse:
        if status == 404 and self.mutant == "missing-404":
            return HttpResponse(500, (("Content-Length", "3"),), b"???", "Nonsense")
        if self.mutant == "swap-304-412" and status in (304, 412):
            status, etag = (412, None) if status == 304 else (304, None)
        if status == 200 and self.mutant == "body-off-by-one":
            body = body[:-1]
        return make_response(status, etag=etag, body=body)

    def handle(self, req: HttpRequest) -> HttpResponse:
        try:
            if_match, if_none_match = req.if_match, req.if_none_match
        except ValueError:
            return self._respond(404)
        path = req.target
        present = path in self.data

        if req.method == "GET":
            if not present:
                return self._respond(404)
            tag = self.tags[path]
            if if_none_match is not None and self._inm_matches(if_none_match, tag):
                if self.mutant != "no-304":
                    return self._respond(304, tag)
            return self._respond(200, tag, self.data[path])

        if req.method == "PUT":
            check = self.mutant != "put-skip-precond"
            if check and (if_match is not None or if_none_match is not None):
                if not present:
                    return self._respond(412)
                tag = self.tags[path]
                if if_match is not None and not strong_compare(if_match, tag):
                    return self._respond(412)
                if if_none_match is not None and self._inm_matches(if_none_match, tag):
                    return self._respond(412)
            old = self.tags.get(path)
            new = self._mint()
            written = path + "~" if self.mutant == "wrong-target-write" else path
            self.data[written] = req.body
            self.tags[written] = new
            advertised = old if self.mutant == "stale-etag" and old is not None else new
            return self._respond(201 if not present else 204, advertised)

        return self._respond(404)


def _flip_body(msg, raw: bytes) -> bytes:
    if not msg.body:
        return raw
    flipped = bytes([msg.body[0] ^ 0x01]) + msg.body[1:]
    return raw[: len(raw) - len(msg.body)] + flipped


class ReferenceEndpoint:
    """Runs a reference server (or proxy) synchronously inside the tester process.

    Time is virtual: every endpoint call advances the clock by one
    millisecond, so traces are reproducible. With ``shuffle_seed`` set,
    pending output on different connections is delivered in a seeded random
    order, while each connection stays FIFO.
    """

    def __init__(
        self,
        *,
        connections: int = 3,
        mutant: Optional[str] = None,
        seed: int = 0,
        proxy: bool = False,
        shuffle_seed: Optional[int] = None,
        server: Optional[ReferenceServer] = None,
    ) -> None:
        check_mutant(mutant)
        if connections < 1:
            raise ValueError("need at least one connection")
        self.clients = [Pcid(i + 1) for i in range(connections)]
        self.mutant = mutant
        self.proxy = proxy
        self.server = server or ReferenceServer(mutant=None if proxy else mutant, seed=seed)
        self._decoders: dict[Pcid, StreamDecoder] = {}
        self._outbox: dict[Pcid, deque[bytes]] = {}
        self._shuffle = random.Random(shuffle_seed) if shuffle_seed is not None else None
        self._now = 0.0
        self._next_sut = 1
        self._upstream: dict[Pcid, Pcid] = {}  # sut pcid -> client pcid
        self._closed = False

    def clock(self) -> float:
        return self._now

    def _tick(self) -> None:
        self._now += 1.0

    def _queue(self, pcid: Pcid, raw: bytes) -> None:
        self._outbox.setdefault(pcid, deque()).append(raw)

    def send(self, pcid: Pcid, data: bytes) -> None:
        if self._closed:
            raise EndpointError("endpoint closed")
        self._tick()
        known = pcid in self.clients or pcid in self._upstream
        if not known:
            raise EndpointError(f"no such connection {pcid}")
        dec = self._decoders.setdefault(pcid, StreamDecoder())
        try:
            messages = dec.feed(data)
        except MalformedMessage:
            self._queue(pcid, encode(make_response(400)))
            return
        for msg, raw in messages:
            self._deliver(pcid, msg, raw)

    def _deliver(self, pcid: Pcid, msg, raw: bytes) -> None:
        corrupt = self.mutant == "proxy-body-corrupt"
        if not self.proxy:
            if isinstance(msg, HttpRequest):
                self._queue(pcid, encode(self.server.handle(msg)))
            else:
                self._queue(pcid, encode(make_response(400)))
            return
        if not pcid.sut_initiated:
            out = Pcid(self._next_sut, True)
            self._next_sut += 1
            self._upstream[out] = pcid
            self._queue(out, _flip_body(msg, raw) if corrupt else raw)
        else:
            client = self._upstream.pop(pcid)
            self._queue(client, _flip_body(msg, raw) if corrupt else raw)

    def maybe_recv(self, timeout: float = 0.0) -> Optional[tuple[Pcid, bytes]]:
        self._tick()
        ready = sorted(p for p, q in self._outbox.items() if q)
        if not ready:
            return None
        pcid = self._shuffle.choice(ready) if self._shuffle else ready[0]
        return pcid, self._outbox[pcid].popleft()

    def close(self) -> None:
        self._closed = True
