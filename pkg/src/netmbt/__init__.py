"""Testing servers against nondeterministic models, network delays included."""

from .derive import derive
from .executor import Accept, Budgets, Inconclusive, Reject, TraceLog, replay_check, run
from .presets import http_over_tcp, proxy_over_tcp, tester_for

__all__ = [
    "Accept",
    "Budgets",
    "Inconclusive",
    "Reject",
    "TraceLog",
    "derive",
    "http_over_tcp",
    "proxy_over_tcp",
    "replay_check",
    "run",
    "tester_for",
]
