"""Real TCP: the tester's endpoint, and threaded reference servers to point it at."""

from __future__ import annotations

import errno
import select
import selectors
import socket
import socketserver
import threading
import time
from collections import deque
from dataclasses import replace
from typing import Optional

from ..codec import HttpRequest, MalformedMessage, StreamDecoder, encode, make_response
from ..executor import EndpointError
from ..wire import Pcid
from .reference import ReferenceServer

_CHUNK = 65536


class SocketEndpoint:
    """Client connections to the server under test, plus an origin listener.

    Connections the SUT opens to the listener (a proxy forwarding requests)
    get sut-initiated pcids in accept order.
    """

    def __init__(
        self,
        host: str,
        port: int,
        *,
        connections: int = 3,
        origin_port: Optional[int] = None,
        connect_timeout: float = 5.0,
    ) -> None:
        self._sel = selectors.DefaultSelector()
        self._socks: dict[Pcid, socket.socket] = {}
        self._pending: deque[tuple[Pcid, bytes]] = deque()
        self._t0 = time.monotonic()
        self._next_sut = 1
        self._listener: Optional[socket.socket] = None
        self.clients: list[Pcid] = []
        try:
            if origin_port is not None:
                self._listener = socket.create_server(("127.0.0.1", origin_port))
                self._listener.setblocking(False)
                self._sel.register(self._listener, selectors.EVENT_READ, None)
            for i in range(connections):
                sock = socket.create_connection((host, port), timeout=connect_timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.setblocking(False)
                pcid = Pcid(i + 1)
                self._register(pcid, sock)
                self.clients.append(pcid)
        except OSError as exc:
            self.close()
            raise EndpointError(f"cannot connect to {host}:{port}: {exc}") from exc

    @property
    def origin_address(self) -> Optional[tuple[str, int]]:
        return None if self._listener is None else self._listener.getsockname()[:2]

    def _register(self, pcid: Pcid, sock: socket.socket) -> None:
        self._socks[pcid] = sock
        self._sel.register(sock, selectors.EVENT_READ, pcid)

    def clock(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def send(self, pcid: Pcid, data: bytes) -> None:
        sock = self._socks.get(pcid)
        if sock is None:
            raise EndpointError(f"connection {pcid} is closed")
        view = memoryview(data)
        deadline = time.monotonic() + 5.0
        while view:
            try:
                n = sock.send(view)
                view = view[n:]
            except BlockingIOError:
                if time.monotonic() > deadline:
                    raise EndpointError(f"send on {pcid} timed out") from None
                select.select([], [sock], [], 0.05)
            except OSError as exc:
                raise EndpointError(f"send on {pcid} failed: {exc}") from exc

    def _drop(self, pcid: Pcid) -> None:
        sock = self._socks.pop(pcid)
        self._sel.unregister(sock)
        sock.close()

    def maybe_recv(self, timeout: float = 0.0) -> Optional[tuple[Pcid, bytes]]:
        if self._pending:
            return self._pending.popleft()
        for key, _ in self._sel.select(timeout):
            if key.data is None:
                try:
                    conn, _addr = self._listener.accept()
                except BlockingIOError:
                    continue
                conn.setblocking(False)
                self._register(Pcid(self._next_sut, True), conn)
                self._next_sut += 1
                continue
            pcid = key.data
            try:
                chunk = key.fileobj.recv(_CHUNK)
            except BlockingIOError:
                continue
            except OSError as exc:
                if exc.errno == errno.ECONNRESET and pcid.sut_initiated:
                    self._drop(pcid)
                    continue
                raise EndpointError(f"receive on {pcid} failed: {exc}") from exc
            if not chunk:
                self._drop(pcid)
                if not pcid.sut_initiated:
                    raise EndpointError(f"server closed connection {pcid}")
                continue
            self._pending.append((pcid, chunk))
        return self._pending.popleft() if self._pending else None

    def close(self) -> None:
        for pcid in list(self._socks):
            self._drop(pcid)
        if self._listener is not None:
            self._listener.close()
            self._listener = None
        self._sel.close()


# -- servers for smoke tests and demos ---------------------------------------


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def _read_messages(rfile, dec: StreamDecoder):
    while True:
        chunk = rfile.read1(_CHUNK) if hasattr(rfile, "read1") else rfile.read(1)
        if not chunk:
            return
        try:
            yield from (msg for msg, _ in dec.feed(chunk))
        except MalformedMessage:
            return


class ThreadedServer:
    """Run a reference origin (or a forwarding proxy) on a real port."""

    def __init__(
        self,
        port: int = 0,
        *,
        mutant: Optional[str] = None,
        seed: int = 0,
        upstream: Optional[tuple[str, int]] = None,
    ) -> None:
        origin = ReferenceServer(mutant=None if upstream else mutant, seed=seed)
        lock = threading.Lock()
        corrupt = upstream is not None and mutant == "proxy-body-corrupt"

        def flip(msg):
            if corrupt and msg.body:
                return replace(msg, body=bytes([msg.body[0] ^ 1]) + msg.body[1:])
            return msg

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                try:
                    self._serve()
                except OSError:
                    pass  # the tester hung up

            def _serve(self) -> None:
                for msg in _read_messages(self.rfile, StreamDecoder()):
                    if not isinstance(msg, HttpRequest):
                        self.wfile.write(encode(make_response(400)))
                        continue
                    if upstream is None:
                        with lock:
                            resp = origin.handle(msg)
                    else:
                        try:
                            resp = _forward(upstream, flip(msg))
                        except OSError:
                            resp = None
                        if resp is None:
                            resp = make_response(502)
                        resp = flip(resp)
                    self.wfile.write(encode(resp))
                    self.wfile.flush()

        self._srv = _Server(("127.0.0.1", port), Handler)
        self.address = self._srv.server_address[:2]
        self._thread = threading.Thread(target=self._srv.serve_forever, daemon=True)

    def __enter__(self) -> ThreadedServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._srv.shutdown()
        self._srv.server_close()


def _forward(upstream: tuple[str, int], req: HttpRequest):
    with socket.create_connection(upstream, timeout=10) as sock:
        sock.sendall(encode(req))
        dec = StreamDecoder()
        while True:
            chunk = sock.recv(_CHUNK)
            if not chunk:
                return None
            got = dec.feed(chunk)
            if got:
                return got[0][0]
