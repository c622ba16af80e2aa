"""A hand-written checker for conditional requests on a single connection.

This is the ad hoc baseline the derived tester is cross-checked against. It
tracks, per path, the stored value, what the current ETag is known to equal,
and which tags it is known to differ from.

Two completions over the bare four-case checker are on by default (pass
``complete=False`` for the bare version):

* a successful PUT whose response carries an ETag records that tag as the
  path's current tag;
* a 200 answer to a conditional GET is also rejected when its ETag
  contradicts what is known (a different known tag, a tag known not to be
  current, or a tag matching the request's own If-None-Match).

Without them the checker accepts traces no valid server can produce, such as
two GETs returning different tags with no write in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

from .codec import HttpRequest, HttpResponse
from .executor import RECV, SEND, TraceLog
from .symbolic import ETag, strong_compare, weak_compare

UNKNOWN = None


@dataclass(frozen=True)
class OracleState:
    data: Mapping[str, Optional[bytes]] = field(default_factory=dict)
    is_: Mapping[str, Optional[ETag]] = field(default_factory=dict)
    is_not: Mapping[str, frozenset] = field(default_factory=dict)

    def tag(self, k: str) -> Optional[ETag]:
        return self.is_.get(k, UNKNOWN)

    def excluded(self, k: str) -> frozenset:
        return self.is_not.get(k, frozenset())

    def value(self, k: str) -> Optional[bytes]:
        return self.data.get(k, UNKNOWN)


@dataclass(frozen=True)
class OracleAccept:
    state: OracleState


@dataclass(frozen=True)
class OracleReject:
    index: int
    reason: str


OracleVerdict = Union[OracleAccept, OracleReject]


def _member(t: ETag, tags: Iterable[ETag], weak: bool) -> bool:
    cmp = weak_compare if weak else strong_compare
    return any(cmp(t, u) for u in tags)


def _upd(m: Mapping, k: str, v) -> dict:
    return {**m, k: v}


def check_exchange(
    req: HttpRequest, resp: HttpResponse, st: OracleState, *, complete: bool = True
) -> Union[OracleState, str]:
    """One request/response pair: the next state, or why it is invalid."""
    k = req.target
    try:
        if_match, if_none_match = req.if_match, req.if_none_match
        etag = resp.etag
    except ValueError as exc:
        return f"unparseable tag: {exc}"
    known = st.tag(k)

    if req.method == "PUT" and if_match is not None and if_none_match is None:
        t = if_match
        if 200 <= resp.status < 300:
            if _member(t, st.excluded(k), weak=False):
                return f"PUT succeeded although {t} is known not to be the tag of {k}"
            if known is UNKNOWN or strong_compare(known, t):
                new_tag = etag if complete else UNKNOWN
                return OracleState(
                    _upd(st.data, k, req.body), _upd(st.is_, k, new_tag), _upd(st.is_not, k, frozenset())
                )
            return f"PUT succeeded although the tag of {k} is {known}, not {t}"
        if resp.status == 412:
            if known is not UNKNOWN and strong_compare(known, t):
                return f"precondition failed although the tag of {k} is {t}"
            return replace(st, is_not=_upd(st.is_not, k, st.excluded(k) | {t}))
        return f"unexpected status {resp.status} for a conditional PUT"

    if req.method == "GET" and if_none_match is not None and if_match is None:
        t0 = if_none_match
        if resp.status == 304:
            if _member(t0, st.excluded(k), weak=True):
                return f"304 although {t0} is known not to be the tag of {k}"
            if known is UNKNOWN or weak_compare(known, t0):
                return replace(st, is_=_upd(st.is_, k, t0))
            return f"304 although the tag of {k} is {known}, not {t0}"
        if resp.status == 200:
            if known is not UNKNOWN and weak_compare(known, t0):
                return f"200 although the tag of {k} matches {t0}"
            value = st.value(k)
            if value is not UNKNOWN and value != resp.body:
                return f"body {resp.body!r} differs from the stored {value!r}"
            if complete:
                if etag is None:
                    return "200 without an ETag"
                if known is not UNKNOWN and known != etag:
                    return f"ETag {etag} differs from the known tag {known}"
                if _member(etag, st.excluded(k), weak=False):
                    return f"ETag {etag} is known not to be the tag of {k}"
                if weak_compare(etag, t0):
                    return f"200 with ETag {etag} although it matches If-None-Match {t0}"
            return replace(st, data=_upd(st.data, k, resp.body), is_=_upd(st.is_, k, etag))
        return f"unexpected status {resp.status} for a conditional GET"

    return f"exchange outside the checker's scope: {req.summary()}"


def check(
    exchanges: Sequence[tuple[HttpRequest, HttpResponse]],
    st: OracleState = OracleState(),
    *,
    complete: bool = True,
) -> OracleVerdict:
    for i, (req, resp) in enumerate(exchanges):
        if not isinstance(req, HttpRequest) or not isinstance(resp, HttpResponse):
            return OracleReject(i, "trace is not an alternation of requests and responses")
        result = check_exchange(req, resp, st, complete=complete)
        if isinstance(result, str):
            return OracleReject(i, result)
        st = result
    return OracleAccept(st)


def exchanges_from_trace(trace: TraceLog) -> list[tuple[HttpRequest, HttpResponse]]:
    """Pair a single-connection trace into exchanges; ValueError if it is not one."""
    pcids = {rec.pcid for rec in trace}
    if len(pcids) > 1:
        raise ValueError("the checker handles one connection only")
    records = list(trace)
    if len(records) % 2:
        raise ValueError("trace ends in the middle of an exchange")
    pairs = []
    for a, b in zip(records[::2], records[1::2]):
        if (a.direction, b.direction) != (SEND, RECV):
            raise ValueError(f"record {a.seq}: expected a request followed by its response")
        req, resp = a.msg, b.msg
        if not isinstance(req, HttpRequest) or not isinstance(resp, HttpResponse):
            raise ValueError(f"record {a.seq}: malformed exchange")
        pairs.append((req, resp))
    return pairs


def initial_state(data: Mapping[str, bytes]) -> OracleState:
    """Known contents, unknown tags."""
    return OracleState(dict(data), {}, {})
