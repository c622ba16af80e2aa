"""Ready-made composed models and their testers."""

from __future__ import annotations

from .derive import Tester, derive
from .httpmodel import FIXTURE_DATA, ProxyState, fixture_state, http_server, proxy, symbolic_server
from .model import Model
from .network import compose, tcp

MODELS = ("http", "proxy")


def http_over_tcp(*, known_tags: bool = True) -> Model:
    """The fixture origin server seen through a reordering network.

    With ``known_tags`` off the tester starts without knowing the fixture's
    ETags and must learn them from responses.
    """
    srv = http_server(fixture_state()) if known_tags else symbolic_server(FIXTURE_DATA)
    return compose(tcp(), (), (), srv)


def proxy_over_tcp() -> Model:
    return compose(tcp(), (), (), proxy(ProxyState()))


def tester_for(model: str, *, strict_status: bool = False, known_tags: bool = True) -> Tester:
    if model == "http":
        return derive(http_over_tcp(known_tags=known_tags), strict_status=strict_status)
    if model == "proxy":
        return derive(proxy_over_tcp(), strict_status=strict_status)
    raise ValueError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
