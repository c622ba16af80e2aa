from ..executor import EndpointError, EndpointIO
from .reference import MUTANTS, PROXY_MUTANTS, ReferenceEndpoint, ReferenceServer
from .scripted import Emit, Expect, ScriptedEndpoint, ScriptGenerator, load_script, parse_script
from .sockets import SocketEndpoint, ThreadedServer

__all__ = [
    "EndpointError",
    "EndpointIO",
    "MUTANTS",
    "PROXY_MUTANTS",
    "ReferenceEndpoint",
    "ReferenceServer",
    "Emit",
    "Expect",
    "ScriptedEndpoint",
    "ScriptGenerator",
    "load_script",
    "parse_script",
    "SocketEndpoint",
    "ThreadedServer",
]
