"""TCP endpoint that owns a simulated device.

One connection is served at a time (the device has a single operator).
Each request line gets exactly one response line, in receive order;
while streaming is on, frame lines are interleaved between responses at
the device's streaming rate without reordering request/response pairs.
Malformed lines and rejected commands produce error replies; nothing a
client sends can take the server down.

The server also runs the device's clock. ``time_scale`` maps real
seconds to simulated seconds so tests (and demos) can run the physics
faster than real time.
"""

from __future__ import annotations

import socket
import threading
import time

from edgesim.client import DeviceRuntime
from edgesim.protocol import ErrorMsg, Hello, Message, ProtocolError, decode, encode


class _ClientConn:
    """One accepted connection with a write lock shared by server threads."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.reader = sock.makefile("rb")
        self.wlock = threading.Lock()
        self.alive = True

    def send(self, msg: Message) -> bool:
        with self.wlock:
            if not self.alive:
                return False
            try:
                self.sock.sendall(encode(msg))
                return True
            except OSError:
                self.alive = False
                return False

    def close(self) -> None:
        # shutdown (not reader.close) so a cross-thread close cannot
        # deadlock against a blocked readline; the read side sees EOF
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class DeviceServer:
    """Serve one device runtime over newline-delimited messages."""

    def __init__(self, runtime: DeviceRuntime, host: str = "127.0.0.1",
                 port: int = 9901, time_scale: float = 1.0,
                 tick_interval_s: float = 0.005):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.runtime = runtime
        self.host = host
        self.port = port
        self.time_scale = time_scale
        self.tick_interval_s = tick_interval_s
        self._listener: socket.socket | None = None
        self._client: _ClientConn | None = None
        self._running = False
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        assert self._listener is not None, "server not started"
        return self._listener.getsockname()[:2]

    def start(self) -> None:
        """Bind and spin up the accept and tick threads.

        Bind failures propagate to the caller; nothing is left running.
        """
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(5)
        self._listener = listener
        self._running = True
        for target in (self._accept_loop, self._tick_loop):
            thread = threading.Thread(target=target, daemon=True,
                                      name=f"edgesim-{target.__name__}")
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._running = False
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        client = self._client
        if client is not None:
            client.close()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._threads.clear()

    def serve_forever(self) -> None:
        """Block until stop() or KeyboardInterrupt."""
        try:
            while self._running:
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # ------------------------------------------------------------------

    def _tick_loop(self) -> None:
        last = time.monotonic()
        while self._running:
            time.sleep(self.tick_interval_s)
            now = time.monotonic()
            dt_sim_ms = (now - last) * 1000.0 * self.time_scale
            last = now
            if dt_sim_ms <= 0:
                continue
            frames = self.runtime.tick(dt_sim_ms)
            if not frames:
                continue
            client = self._client
            if client is not None:
                for frame in frames:
                    client.send(frame.to_message())

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return  # listener closed during shutdown
            conn = _ClientConn(sock)
            self._client = conn
            try:
                self._serve_connection(conn)
            finally:
                self._client = None
                # streaming is per-connection; targets persist
                self.runtime.stop_streaming()
                conn.close()

    def _serve_connection(self, conn: _ClientConn) -> None:
        conn.send(Hello())
        try:
            while self._running and conn.alive:
                try:
                    line = conn.reader.readline()
                except (OSError, ValueError):
                    return
                if not line:
                    return
                try:
                    msg = decode(line)
                except ProtocolError as exc:
                    conn.send(ErrorMsg("PROTOCOL", str(exc)))
                    continue
                reply = self.runtime.apply(msg)
                conn.send(reply)
        finally:
            # the reader is closed by its owning thread only
            try:
                conn.reader.close()
            except (OSError, ValueError):
                pass


def run_server(runtime: DeviceRuntime, host: str, port: int,
               time_scale: float = 1.0) -> DeviceServer:
    """Construct and start a server; caller owns stop()."""
    server = DeviceServer(runtime, host=host, port=port, time_scale=time_scale)
    server.start()
    return server
