"""Running a nondeterministic tester deterministically against a live endpoint.

The executor keeps every branch of the tester that still explains the
observed trace. Sends and receives are performed once, for real, and then
used to filter the live set: after a send only branches that wanted to send
that same packet survive, after a receive only branches that expected a
packet survive, and each of those is fed the packet. The server is rejected
when no branch is left.
"""

from __future__ import annotations

import base64
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Any, Callable, Iterable, Optional, Protocol, Union

from .codec import MalformedMessage, Message, StreamDecoder, decode, encode
from .derive import Determine, EmitRequest, ExpectResponse, Generate, Tester, front_key
from .model import Failed, Halt
from .network import PRUNED
from .wire import Pcid, Wire

log = logging.getLogger(__name__)

SEND = "send"
RECV = "recv"


class EndpointError(Exception):
    """The endpoint failed at the transport level (not a conformance failure)."""


class EndpointIO(Protocol):
    clients: list[Pcid]

    def send(self, pcid: Pcid, data: bytes) -> None: ...

    def maybe_recv(self, timeout: float) -> Optional[tuple[Pcid, bytes]]: ...

    def clock(self) -> float: ...

    def close(self) -> None: ...


# -- trace log ---------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    seq: int
    time_ms: float
    direction: str
    pcid: Pcid
    raw: bytes

    @property
    def msg(self) -> Optional[Message]:
        try:
            result = decode(self.raw)
        except MalformedMessage:
            return None
        if result is None or result[1]:
            return None
        return result[0]

    @property
    def wire(self) -> Wire:
        return Wire(self.pcid, self.msg)

    def summary(self) -> str:
        msg = self.msg
        return msg.summary() if msg is not None else "<malformed>"

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "time_ms": round(self.time_ms, 3),
                "dir": self.direction,
                "pcid": self.pcid.id,
                "sut_initiated": self.pcid.sut_initiated,
                "raw": base64.b64encode(self.raw).decode("ascii"),
                "summary": self.summary(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> TraceRecord:
        d = json.loads(line)
        pcid = Pcid(d["pcid"], d.get("sut_initiated", False))
        return cls(d["seq"], d["time_ms"], d["dir"], pcid, base64.b64decode(d["raw"]))


class TraceLog:
    """Append-only transcript of what the tester sent and received."""

    def __init__(self, records: Iterable[TraceRecord] = ()) -> None:
        self.records: list[TraceRecord] = list(records)
        self.meta: dict[str, Any] = {}

    def append(self, time_ms: float, direction: str, pcid: Pcid, raw: bytes) -> TraceRecord:
        rec = TraceRecord(len(self.records), time_ms, direction, pcid, raw)
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def dump(self, fp: IO[str]) -> None:
        if self.meta:
            fp.write(json.dumps({"meta": self.meta}, sort_keys=True) + "\n")
        for rec in self.records:
            fp.write(rec.to_json() + "\n")

    def dumps(self) -> str:
        import io

        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(cls, fp: IO[str]) -> TraceLog:
        log_ = cls()
        for line in fp:
            line = line.strip()
            if not line:
                continue
            if line.startswith('{"meta"'):
                log_.meta = json.loads(line)["meta"]
                continue
            log_.records.append(TraceRecord.from_json(line))
        return log_

    @classmethod
    def from_wires(cls, events: Iterable[tuple[str, Wire]]) -> TraceLog:
        """Build a trace from ``(direction, wire)`` pairs, e.g. for golden tests."""
        log_ = cls()
        for i, (direction, w) in enumerate(events):
            assert w.msg is not None
            log_.append(float(i), direction, w.pcid, encode(w.msg))
        return log_

    def render(self) -> str:
        lines = []
        for rec in self.records:
            arrow = ">>" if rec.direction == SEND else "<<"
            lines.append(f"  #{rec.seq:<4} {rec.time_ms:9.1f}ms {arrow} {rec.pcid} {rec.summary()}")
        return "\n".join(lines)


# -- verdicts ----------------------------------------------------------------


@dataclass(frozen=True)
class Accept:
    steps: int
    trace: TraceLog = field(compare=False, repr=False)


@dataclass(frozen=True)
class Reject:
    steps: int
    reasons: tuple[str, ...]
    trace: TraceLog = field(compare=False, repr=False)


@dataclass(frozen=True)
class Inconclusive:
    steps: int
    reason: str
    trace: TraceLog = field(compare=False, repr=False)


Verdict = Union[Accept, Reject, Inconclusive]


@dataclass(frozen=True)
class Budgets:
    max_steps: int = 200
    retries: int = 50
    poll_ms: float = 2.0
    max_branches: int = 4096
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        for name in ("max_steps", "retries", "poll_ms", "max_branches", "timeout_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# -- branch set --------------------------------------------------------------


class TooManyBranches(Exception):
    pass


@dataclass(frozen=True)
class Trail:
    """Cons list of the assumptions a branch has made."""

    entry: tuple[int, str]
    parent: Optional[Trail] = None

    def entries(self) -> list[tuple[int, str]]:
        out, node = [], self
        while node is not None:
            out.append(node.entry)
            node = node.parent
        return out[::-1]


@dataclass(frozen=True)
class Branch:
    tester: Tester
    front: Any = None
    trail: Optional[Trail] = None


def _is_expecting(b: Branch) -> bool:
    return isinstance(b.front, ExpectResponse)


def _is_emitting(b: Branch) -> bool:
    return isinstance(b.front, EmitRequest)


@dataclass(frozen=True)
class BranchSet:
    """The live explanations of the trace so far, at one external position."""

    branches: tuple[Branch, ...]
    position: int = 0
    failures: tuple[str, ...] = ()
    max_branches: int = 4096

    @classmethod
    def initial(cls, t0: Tester, max_branches: int = 4096) -> BranchSet:
        return cls((Branch(t0),), 0, (), max_branches)

    def expand(self, packet: Callable[[], Optional[Wire]]) -> BranchSet:
        """Drive every branch to an emit, expect, halt, or blocked-generate front.

        ``packet`` is asked (at most once per call, by the caller's memo) for
        the generator's proposal at this position.
        """
        out: list[Branch] = []
        failures = list(self.failures)
        stack = list(reversed(self.branches))
        while stack:
            b = stack.pop()
            front = b.front if b.front is not None else b.tester.step()
            if isinstance(front, Determine):
                first = Branch(front.first, None, Trail((self.position, f"{front.label} = true"), b.trail))
                second = Branch(front.second, None, Trail((self.position, f"{front.label} = false"), b.trail))
                stack.append(second)
                stack.append(first)
            elif isinstance(front, Generate):
                w = packet()
                if w is None:
                    out.append(Branch(b.tester, front, b.trail))
                else:
                    stack.append(Branch(front.k(w), None, b.trail))
            elif isinstance(front, Failed):
                if front.reason != PRUNED:
                    failures.append(front.reason)
            else:
                out.append(Branch(b.tester, front, b.trail))
            if len(out) + len(stack) > self.max_branches:
                raise TooManyBranches(f"more than {self.max_branches} live branches")
        return BranchSet(_merge(out), self.position, tuple(failures), self.max_branches)

    @property
    def empty(self) -> bool:
        return not self.branches

    @property
    def can_emit(self) -> bool:
        return any(_is_emitting(b) for b in self.branches)

    @property
    def expecting(self) -> bool:
        return any(_is_expecting(b) for b in self.branches)

    @property
    def halted(self) -> bool:
        return bool(self.branches) and all(isinstance(b.front, Halt) for b in self.branches)

    def emit_candidate(self) -> Optional[Wire]:
        for b in self.branches:
            if _is_emitting(b):
                return b.front.wire
        return None

    def after_send(self, w: Wire) -> BranchSet:
        kept = tuple(
            Branch(b.front.k, None, b.trail) for b in self.branches if _is_emitting(b) and b.front.wire == w
        )
        failures = () if kept else (f"no branch could send {w}",)
        return BranchSet(kept, self.position + 1, failures, self.max_branches)

    def after_recv(self, w: Wire) -> BranchSet:
        kept = tuple(Branch(b.front.k(w), None, b.trail) for b in self.branches if _is_expecting(b))
        failures = () if kept else (f"no branch expected to receive {w}",)
        return BranchSet(kept, self.position + 1, failures, self.max_branches)


def _merge(branches: list[Branch]) -> tuple[Branch, ...]:
    """Drop branches interchangeable with an earlier one."""
    seen: set = set()
    kept = []
    for b in branches:
        key = front_key(b.front)
        if key is not None:
            if key in seen:
                continue
            seen.add(key)
        kept.append(b)
    return tuple(kept)


class _Memo:
    def __init__(self, fn: Callable[[], Optional[Wire]]) -> None:
        self._fn = fn
        self._done = False
        self._value: Optional[Wire] = None

    def __call__(self) -> Optional[Wire]:
        if not self._done:
            self._value = self._fn()
            self._done = True
        return self._value


# -- generation hook ---------------------------------------------------------


class Generator(Protocol):
    def next_packet(self, trace: TraceLog, index: int) -> Optional[Wire]: ...

    def prefer_send(self, trace: TraceLog, index: int) -> bool: ...


# -- live execution ----------------------------------------------------------


class _Inbox:
    def __init__(self, io: EndpointIO) -> None:
        self.io = io
        self.decoders: dict[Pcid, StreamDecoder] = {}
        self.ready: deque[tuple[Pcid, bytes]] = deque()

    def poll(self, timeout: float) -> None:
        got = self.io.maybe_recv(timeout)
        if got is None:
            return
        pcid, data = got
        dec = self.decoders.setdefault(pcid, StreamDecoder())
        try:
            for _msg, raw in dec.feed(data):
                self.ready.append((pcid, raw))
        except MalformedMessage:
            self.ready.append((pcid, dec.pending))
            self.decoders[pcid] = StreamDecoder()


def run(
    t0: Tester,
    io: EndpointIO,
    gen: Generator,
    budgets: Budgets = Budgets(),
    *,
    trace: Optional[TraceLog] = None,
) -> Verdict:
    """Test the endpoint until rejection or until the step budget is spent."""
    trace = trace if trace is not None else TraceLog()
    deadline = time.monotonic() + budgets.timeout_s
    poll = budgets.poll_ms / 1000.0
    inbox = _Inbox(io)
    bs = BranchSet.initial(t0, budgets.max_branches)
    steps = 0

    def do_send(bs: BranchSet) -> BranchSet:
        w = bs.emit_candidate()
        assert w is not None and w.msg is not None
        raw = encode(w.msg)
        io.send(w.pcid, raw)
        trace.append(io.clock(), SEND, w.pcid, raw)
        return bs.after_send(w)

    def receive() -> Optional[tuple[Pcid, bytes]]:
        for _ in range(budgets.retries + 1):
            if inbox.ready:
                return inbox.ready.popleft()
            if time.monotonic() > deadline:
                return None
            inbox.poll(poll)
        return inbox.ready.popleft() if inbox.ready else None

    try:
        while steps < budgets.max_steps:
            if time.monotonic() > deadline:
                return Inconclusive(steps, "timeout", trace)
            index = steps
            bs = bs.expand(_Memo(lambda: gen.next_packet(trace, index)))
            if bs.empty:
                return Reject(steps, bs.failures, trace)
            if bs.halted:
                return Accept(steps, trace)
            if bs.can_emit and (not bs.expecting or gen.prefer_send(trace, index)):
                bs = do_send(bs)
            else:
                got = receive()
                if got is not None:
                    pcid, raw = got
                    rec = trace.append(io.clock(), RECV, pcid, raw)
                    bs = bs.after_recv(rec.wire)
                elif bs.can_emit:
                    bs = do_send(bs)
                elif time.monotonic() > deadline:
                    return Inconclusive(steps, "timeout", trace)
                else:
                    return Inconclusive(steps, f"no packet after {budgets.retries} retries", trace)
            steps += 1
            log.debug("step %d: %d live branches", steps, len(bs.branches))
        bs = bs.expand(lambda: None)
        if bs.empty:
            return Reject(steps, bs.failures, trace)
        return Accept(steps, trace)
    except TooManyBranches as exc:
        return Inconclusive(steps, str(exc), trace)
    except EndpointError as exc:
        return Inconclusive(steps, f"endpoint error: {exc}", trace)


# -- replay ------------------------------------------------------------------


class Replayer:
    """Incremental replay of recorded events; values are immutable."""

    def __init__(self, bs: BranchSet) -> None:
        self.bs = bs

    @classmethod
    def start(cls, t0: Tester, max_branches: int = 1 << 20) -> Replayer:
        return cls(BranchSet.initial(t0, max_branches))

    def feed(self, direction: str, w: Wire) -> Replayer:
        bs = self.bs.expand(lambda: w if direction == SEND else None)
        if bs.empty:
            return Replayer(bs)
        bs = bs.after_send(w) if direction == SEND else bs.after_recv(w)
        return Replayer(bs.expand(lambda: None))

    @property
    def alive(self) -> bool:
        return not self.bs.empty


def replay_check(t0: Tester, trace: TraceLog, *, max_branches: int = 1 << 20) -> Verdict:
    """Judge a recorded session with the same branch semantics as :func:`run`."""
    r = Replayer.start(t0, max_branches)
    try:
        for i, rec in enumerate(trace):
            if rec.direction not in (SEND, RECV):
                return Reject(i + 1, (f"unknown direction {rec.direction!r}",), trace)
            r = r.feed(rec.direction, rec.wire)
            if not r.alive:
                return Reject(i + 1, r.bs.failures, trace)
    except TooManyBranches as exc:
        return Inconclusive(len(trace), str(exc), trace)
    return Accept(len(trace), trace)
