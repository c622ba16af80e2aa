"""Request generation steered by what the server has already revealed.

Every draw is a pure function of the shared trace and the run seed, so all
live branches at the same position propose the same packet.
"""

from __future__ import annotations

import random
import string
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .codec import HttpRequest, HttpResponse, make_request, make_response
from .executor import RECV, SEND, TraceLog
from .httpmodel import FIXTURE_DATA
from .symbolic import ETag
from .wire import Pcid, Wire

_TAG_CHARS = string.ascii_lowercase + string.digits


@dataclass(frozen=True)
class GenConfig:
    p_put: float = 0.5
    p_known_path: float = 0.9
    p_precondition: float = 0.5
    p_if_match: float = 0.5  # PUT only; otherwise If-None-Match
    p_observed_tag: float = 0.75
    p_flip_weak: float = 0.25
    p_pipeline: float = 0.3
    p_origin_reply: float = 0.5  # proxy mode: answer a forwarded request rather than issue a new one
    max_body: int = 8


@dataclass
class GenState:
    """What generation may depend on: observations plus a seeded stream."""

    observed: list[tuple[str, ETag]]
    known_paths: list[str]
    rng: random.Random

    @property
    def observed_etags(self) -> set[ETag]:
        return {tag for _, tag in self.observed}


def _rng(seed: int, index: int, purpose: str) -> random.Random:
    return random.Random(f"{seed}:{index}:{purpose}")


def _random_tag(rng: random.Random) -> ETag:
    return ETag("".join(rng.choice(_TAG_CHARS) for _ in range(4)))


def _random_body(rng: random.Random, cfg: GenConfig) -> bytes:
    n = rng.randint(1, cfg.max_body)
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(n)).encode()


def _pick_tag(gs: GenState, path: str, cfg: GenConfig) -> ETag:
    rng = gs.rng
    if gs.observed and rng.random() < cfg.p_observed_tag:
        same_path = [t for p, t in gs.observed if p == path]
        pool = same_path if same_path and rng.random() < 0.8 else [t for _, t in gs.observed]
        tag = rng.choice(pool)
    else:
        tag = _random_tag(rng)
    if rng.random() < cfg.p_flip_weak:
        tag = ETag(tag.opaque, not tag.weak)
    return tag


def gen_request(gs: GenState, cfg: GenConfig = GenConfig()) -> HttpRequest:
    rng = gs.rng
    method = "PUT" if rng.random() < cfg.p_put else "GET"
    if gs.known_paths and rng.random() < cfg.p_known_path:
        target = rng.choice(gs.known_paths)
    else:
        target = "/new-" + "".join(rng.choice(string.ascii_lowercase) for _ in range(3))
    if_match = if_none_match = None
    if rng.random() < cfg.p_precondition:
        tag = _pick_tag(gs, target, cfg)
        if method == "PUT" and rng.random() < cfg.p_if_match:
            if_match = tag
        else:
            if_none_match = tag
    body = _random_body(rng, cfg) if method == "PUT" else b""
    return make_request(method, target, if_match=if_match, if_none_match=if_none_match, body=body)


# -- reading the trace -------------------------------------------------------


@dataclass
class _Scan:
    observed: list[tuple[str, ETag]] = field(default_factory=list)
    put_paths: list[str] = field(default_factory=list)
    # client pcid -> targets of requests still awaiting a response
    outstanding: dict[Pcid, deque] = field(default_factory=lambda: defaultdict(deque))
    # sut pcid -> forwarded requests not yet answered
    forwarded: dict[Pcid, deque] = field(default_factory=lambda: defaultdict(deque))


def scan(trace: TraceLog) -> _Scan:
    sc = _Scan()
    for rec in trace:
        msg = rec.msg
        if rec.pcid.sut_initiated:
            if rec.direction == RECV and isinstance(msg, HttpRequest):
                sc.forwarded[rec.pcid].append(msg)
            elif rec.direction == SEND and sc.forwarded[rec.pcid]:
                sc.forwarded[rec.pcid].popleft()
            continue
        if rec.direction == SEND and isinstance(msg, HttpRequest):
            sc.outstanding[rec.pcid].append(msg.target)
            if msg.method == "PUT" and msg.target not in sc.put_paths:
                sc.put_paths.append(msg.target)
        elif rec.direction == RECV:
            path = sc.outstanding[rec.pcid].popleft() if sc.outstanding[rec.pcid] else None
            if path is not None and isinstance(msg, HttpResponse):
                try:
                    tag = msg.etag
                except ValueError:
                    tag = None
                if tag is not None and (path, tag) not in sc.observed:
                    sc.observed.append((path, tag))
    return sc


def state_from_trace(
    trace: TraceLog, seed: int, index: int, base_paths: Sequence[str] = tuple(FIXTURE_DATA)
) -> GenState:
    sc = scan(trace)
    paths = list(base_paths) + [p for p in sc.put_paths if p not in base_paths]
    return GenState(sc.observed, paths, _rng(seed, index, "request"))


# -- generators plugged into the executor ------------------------------------


class HttpGenerator:
    """Issues requests on idle client connections."""

    def __init__(
        self,
        seed: int,
        clients: Iterable[Pcid],
        *,
        paths: Sequence[str] = tuple(FIXTURE_DATA),
        cfg: GenConfig = GenConfig(),
    ) -> None:
        self.seed = seed
        self.clients = list(clients)
        self.paths = tuple(paths)
        self.cfg = cfg

    def _idle(self, sc: _Scan) -> list[Pcid]:
        return [c for c in self.clients if not sc.outstanding.get(c)]

    def next_packet(self, trace: TraceLog, index: int) -> Optional[Wire]:
        sc = scan(trace)
        idle = self._idle(sc)
        if not idle:
            return None
        gs = state_from_trace(trace, self.seed, index, self.paths)
        pcid = gs.rng.choice(idle)
        return Wire(pcid, gen_request(gs, self.cfg))

    def prefer_send(self, trace: TraceLog, index: int) -> bool:
        return _rng(self.seed, index, "schedule").random() < self.cfg.p_pipeline


class ProxyGenerator(HttpGenerator):
    """Plays both the clients and the origin server behind a proxy."""

    def next_packet(self, trace: TraceLog, index: int) -> Optional[Wire]:
        sc = scan(trace)
        rng = _rng(self.seed, index, "origin")
        waiting = sorted(p for p, q in sc.forwarded.items() if q)
        idle = self._idle(sc)
        if waiting and (not idle or rng.random() < self.cfg.p_origin_reply):
            pcid = rng.choice(waiting)
            body = _random_body(rng, self.cfg)
            return Wire(pcid, make_response(200, etag=_random_tag(rng), body=body))
        return super().next_packet(trace, index)
