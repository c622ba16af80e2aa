"""An endpoint that plays back a fixed server-side script.

A script is a list of steps, stored one JSON object per line::

    {"expect": {"pcid": 1, "text": "GET /a HTTP/1.1\\r\\n...", "capture": "m1"}}
    {"send": {"pcid": 1, "sut": true, "ref": "m1"}}

``expect`` consumes the next whole message the tester sends (optionally
checking its connection and exact bytes, optionally remembering it under a
name); ``send`` makes the endpoint emit bytes, given literally with ``text``
or by ``ref`` to a captured message. Any deviation aborts the script, after
which the endpoint is silent.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

from ..codec import StreamDecoder, decode
from ..executor import EndpointError, TraceLog
from ..wire import Pcid, Wire


@dataclass(frozen=True)
class Expect:
    pcid: Optional[Pcid] = None
    text: Optional[bytes] = None
    capture: Optional[str] = None


@dataclass(frozen=True)
class Emit:
    pcid: Pcid
    text: Optional[bytes] = None
    ref: Optional[str] = None


Step = Union[Expect, Emit]


def _pcid(d: dict) -> Optional[Pcid]:
    if "pcid" not in d:
        return None
    return Pcid(int(d["pcid"]), bool(d.get("sut", False)))


def _bytes(d: dict) -> Optional[bytes]:
    text = d.get("text")
    return None if text is None else text.encode("latin-1")


def parse_script(lines: Iterable[str]) -> list[Step]:
    steps: list[Step] = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"script line {n}: {exc}") from None
        if "expect" in obj:
            d = obj["expect"]
            steps.append(Expect(_pcid(d), _bytes(d), d.get("capture")))
        elif "send" in obj:
            d = obj["send"]
            pcid = _pcid(d)
            if pcid is None or (("text" in d) == ("ref" in d)):
                raise ValueError(f"script line {n}: send needs a pcid and exactly one of text/ref")
            steps.append(Emit(pcid, _bytes(d), d.get("ref")))
        else:
            raise ValueError(f"script line {n}: expected an 'expect' or 'send' step")
    return steps


def load_script(fp: IO[str]) -> list[Step]:
    return parse_script(fp)


def dump_script(steps: Iterable[Step]) -> str:
    out = []
    for s in steps:
        if isinstance(s, Expect):
            d: dict = {}
            if s.pcid is not None:
                d.update(pcid=s.pcid.id, sut=s.pcid.sut_initiated)
            if s.text is not None:
                d["text"] = s.text.decode("latin-1")
            if s.capture is not None:
                d["capture"] = s.capture
            out.append(json.dumps({"expect": d}))
        else:
            d = {"pcid": s.pcid.id, "sut": s.pcid.sut_initiated}
            if s.text is not None:
                d["text"] = s.text.decode("latin-1")
            else:
                d["ref"] = s.ref
            out.append(json.dumps({"send": d}))
    return "\n".join(out) + "\n"


class ScriptedEndpoint:
    def __init__(self, steps: Iterable[Step], *, clients: Optional[list[Pcid]] = None) -> None:
        self.steps = deque(steps)
        declared = {s.pcid for s in self.steps if s.pcid is not None and not s.pcid.sut_initiated}
        self.clients = clients if clients is not None else sorted(declared) or [Pcid(1)]
        self.captured: dict[str, bytes] = {}
        self.aborted: Optional[str] = None
        self._decoders: dict[Pcid, StreamDecoder] = {}
        self._outbox: deque[tuple[Pcid, bytes]] = deque()
        self._now = 0.0

    def clock(self) -> float:
        return self._now

    @property
    def exhausted(self) -> bool:
        return not self.steps and not self._outbox

    def _flush_sends(self) -> None:
        while self.steps and isinstance(self.steps[0], Emit):
            s = self.steps.popleft()
            if s.text is not None:
                data = s.text
            elif s.ref in self.captured:
                data = self.captured[s.ref]
            else:
                self._abort(f"reference to uncaptured message {s.ref!r}")
                return
            self._outbox.append((s.pcid, data))

    def _abort(self, why: str) -> None:
        self.aborted = why
        self.steps.clear()

    def send(self, pcid: Pcid, data: bytes) -> None:
        self._now += 1.0
        if self.aborted is not None:
            return
        self._flush_sends()
        dec = self._decoders.setdefault(pcid, StreamDecoder())
        try:
            messages = dec.feed(data)
        except ValueError as exc:
            self._abort(f"tester sent malformed bytes: {exc}")
            return
        for _msg, raw in messages:
            if not self.steps or not isinstance(self.steps[0], Expect):
                self._abort(f"unexpected message on {pcid}")
                return
            s = self.steps.popleft()
            if (s.pcid is not None and s.pcid != pcid) or (s.text is not None and s.text != raw):
                self._abort(f"tester deviated from script on {pcid}")
                return
            if s.capture is not None:
                self.captured[s.capture] = raw

    def maybe_recv(self, timeout: float = 0.0) -> Optional[tuple[Pcid, bytes]]:
        self._now += 1.0
        if self.aborted is None:
            self._flush_sends()
        if self._outbox:
            return self._outbox.popleft()
        return None

    def close(self) -> None:
        self.steps.clear()
        self._outbox.clear()

    def generator(self) -> ScriptGenerator:
        return ScriptGenerator(self)


class ScriptGenerator:
    """Proposes exactly the messages the script expects, in script order.

    Waits rather than sends while the script has server output due, so the
    recorded order follows the script.
    """

    def __init__(self, ep: ScriptedEndpoint) -> None:
        self.ep = ep

    def next_packet(self, trace: TraceLog, index: int) -> Optional[Wire]:
        ep = self.ep
        if ep._outbox or not ep.steps or not isinstance(ep.steps[0], Expect):
            return None
        s = ep.steps[0]
        if s.text is None:
            return None
        decoded = decode(s.text)
        if decoded is None:
            return None
        return Wire(s.pcid or ep.clients[0], decoded[0])

    def prefer_send(self, trace: TraceLog, index: int) -> bool:
        ep = self.ep
        return not ep._outbox and bool(ep.steps) and isinstance(ep.steps[0], Expect)


def script_from_trace(trace: TraceLog) -> list[Step]:
    """A script under which the endpoint reproduces a recorded session."""
    steps: list[Step] = []
    for rec in trace:
        if rec.direction == "send":
            steps.append(Expect(rec.pcid, rec.raw))
        else:
            steps.append(Emit(rec.pcid, rec.raw))
    return steps
