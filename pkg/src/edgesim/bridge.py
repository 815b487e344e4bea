"""Browser-facing bridge: live session events, responses, frame preview.

One listener accepts two framings. Browsers connect with a WebSocket
upgrade (RFC 6455 text frames); local processes (the session engine, or
tests) connect with plain newline-delimited JSON. Payloads are identical
JSON objects either way, matching the wire-protocol conventions.

Roles:

* ``ui`` clients receive the experiment event stream plus preview frames
  and may submit responses, start an in-process session, or abort one.
* at most one ``engine`` publisher (a ``session --live`` process) feeds
  events through the bridge and receives the UI's responses.

When no external engine is attached, the bridge can run a live session
itself against the device it shares a process with; responses are gated
by the engine-side response window either way, so out-of-phase or
duplicate presses never produce records.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import threading
import time
from datetime import datetime

from edgesim.client import DeviceRuntime, LocalDeviceClient, WallClock
from edgesim.experiment import (
    LiveResponder,
    SessionAborted,
    SessionPlan,
    compute_stats,
    export_csv,
    export_structured,
    run_session,
)
from edgesim.protocol import Calibrate, Status

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_MAX_WS_PAYLOAD = 1 << 20

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class _WsConn:
    """Server side of one WebSocket connection (text frames only)."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()

    def send_json(self, obj: dict) -> bool:
        payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
        header = bytearray([0x81])
        n = len(payload)
        if n < 126:
            header.append(n)
        elif n < (1 << 16):
            header.append(126)
            header += n.to_bytes(2, "big")
        else:
            header.append(127)
            header += n.to_bytes(8, "big")
        with self._send_lock:
            try:
                self.sock.sendall(bytes(header) + payload)
                return True
            except OSError:
                return False

    def _read_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("websocket closed mid-frame")
            buf += chunk
        return buf

    def recv_json(self) -> dict | None:
        """Next text message as JSON; None once the peer closes."""
        message = b""
        while True:
            try:
                head = self._read_exact(2)
            except (ConnectionError, OSError):
                return None
            fin = head[0] & 0x80
            opcode = head[0] & 0x0F
            masked = head[1] & 0x80
            length = head[1] & 0x7F
            try:
                if length == 126:
                    length = int.from_bytes(self._read_exact(2), "big")
                elif length == 127:
                    length = int.from_bytes(self._read_exact(8), "big")
                if length > _MAX_WS_PAYLOAD:
                    return None
                mask = self._read_exact(4) if masked else b""
                payload = self._read_exact(length) if length else b""
            except (ConnectionError, OSError):
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if opcode == 0x8:  # close
                with self._send_lock:
                    try:
                        self.sock.sendall(b"\x88\x00")
                    except OSError:
                        pass
                return None
            if opcode == 0x9:  # ping -> pong
                with self._send_lock:
                    try:
                        self.sock.sendall(bytes([0x8A, len(payload)]) + payload)
                    except OSError:
                        return None
                continue
            if opcode == 0xA:  # pong
                continue
            message += payload
            if not fin:
                continue
            try:
                return json.loads(message.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                message = b""
                continue  # ignore unintelligible frames from the browser

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class _LineConn:
    """Newline-delimited JSON peer (engine process or headless test)."""

    def __init__(self, sock: socket.socket, first_obj: dict | None):
        self.sock = sock
        self.reader = sock.makefile("rb")
        self._send_lock = threading.Lock()
        self._pending = first_obj

    def send_json(self, obj: dict) -> bool:
        data = json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"
        with self._send_lock:
            try:
                self.sock.sendall(data)
                return True
            except OSError:
                return False

    def recv_json(self) -> dict | None:
        if self._pending is not None:
            obj, self._pending = self._pending, None
            return obj
        while True:
            try:
                line = self.reader.readline()
            except (OSError, ValueError):
                return None
            if not line:
                return None
            try:
                obj = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                continue  # keep the channel alive on junk input
            if isinstance(obj, dict):
                return obj

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class BridgeHub:
    """Fan-out hub between one engine, N UI clients, and the device."""

    def __init__(self, runtime: DeviceRuntime, host: str = "127.0.0.1",
                 port: int = 9902, static_dir: str | None = None,
                 session_dir: str | None = None, preview_rate_hz: float = 10.0):
        self.runtime = runtime
        self.host = host
        self.port = port
        self.static_dir = static_dir
        self.session_dir = session_dir
        self.preview_rate_hz = preview_rate_hz
        self._listener: socket.socket | None = None
        self._running = False
        self._threads: list[threading.Thread] = []
        self._ui_clients: set = set()
        self._ui_lock = threading.Lock()
        self._engine = None
        self._session_thread: threading.Thread | None = None
        self._session_lock = threading.Lock()
        self._live_responder: LiveResponder | None = None
        self._abort_event: threading.Event | None = None
        self._session_active = False

    # ------------------------------------------------------------------

    @property
    def address(self) -> tuple[str, int]:
        assert self._listener is not None, "bridge not started"
        return self._listener.getsockname()[:2]

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(8)
        self._listener = listener
        self._running = True
        for target in (self._accept_loop, self._preview_loop):
            thread = threading.Thread(target=target, daemon=True,
                                      name=f"edgesim-bridge-{target.__name__}")
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        self._running = False
        if self._abort_event is not None:
            self._abort_event.set()
        if self._live_responder is not None:
            self._live_responder.abort()
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        with self._ui_lock:
            clients = list(self._ui_clients)
        for conn in clients:
            conn.close()
        if self._engine is not None:
            self._engine.close()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._threads.clear()

    # ------------------------------------------------------------------
    # fan-out

    def broadcast(self, obj: dict) -> None:
        if obj.get("type") == "session_start":
            self._session_active = True
        elif obj.get("type") == "session_end":
            self._session_active = False
        with self._ui_lock:
            clients = list(self._ui_clients)
        for conn in clients:
            if not conn.send_json(obj):
                self._drop_ui(conn)

    def _drop_ui(self, conn) -> None:
        with self._ui_lock:
            self._ui_clients.discard(conn)
        conn.close()

    def _status_obj(self) -> dict:
        state = self.runtime.apply(Status())
        return {
            "type": "bridge_status",
            "engine_connected": self._engine is not None,
            "session_active": self._session_active,
            "device": state.to_dict(),
        }

    # ------------------------------------------------------------------
    # connection plumbing

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._handle_conn, args=(sock,),
                                      daemon=True)
            thread.start()

    def _handle_conn(self, sock: socket.socket) -> None:
        sock.settimeout(5.0)
        try:
            first = _read_line(sock)
        except OSError:
            sock.close()
            return
        if first is None:
            sock.close()
            return
        if first.startswith(b"GET ") or first.startswith(b"HEAD "):
            self._handle_http(sock, first)
            return
        sock.settimeout(None)
        try:
            obj = json.loads(first.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            sock.close()
            return
        role = obj.get("role", "ui") if obj.get("type") == "hello" else "ui"
        conn = _LineConn(sock, None if obj.get("type") == "hello" else obj)
        if role == "engine":
            self._serve_engine(conn)
        else:
            self._serve_ui(conn)

    def _handle_http(self, sock: socket.socket, request_line: bytes) -> None:
        headers = {}
        while True:
            line = _read_line(sock)
            if line is None:
                sock.close()
                return
            if line == b"":
                break
            name, _, value = line.partition(b":")
            headers[name.strip().lower().decode("latin-1")] = value.strip().decode("latin-1")
        if headers.get("upgrade", "").lower() == "websocket":
            key = headers.get("sec-websocket-key", "")
            accept = base64.b64encode(
                hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
            ).decode("ascii")
            response = (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            )
            try:
                sock.sendall(response.encode("ascii"))
            except OSError:
                sock.close()
                return
            sock.settimeout(None)
            self._serve_ui(_WsConn(sock))
            return
        self._serve_static(sock, request_line)

    def _serve_static(self, sock: socket.socket, request_line: bytes) -> None:
        try:
            path = request_line.split()[1].decode("latin-1").split("?", 1)[0]
        except (IndexError, UnicodeDecodeError):
            path = "/"
        body, status, ctype = b"not found", "404 Not Found", "text/plain"
        if self.static_dir is not None:
            rel = path.lstrip("/") or "index.html"
            root = os.path.abspath(self.static_dir)
            full = os.path.abspath(os.path.normpath(os.path.join(root, rel)))
            if full.startswith(root + os.sep) and os.path.isfile(full):
                with open(full, "rb") as fh:
                    body = fh.read()
                status = "200 OK"
                ctype = _CONTENT_TYPES.get(os.path.splitext(full)[1],
                                           "application/octet-stream")
        head = (f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n")
        try:
            sock.sendall(head.encode("ascii") + body)
        except OSError:
            pass
        sock.close()

    # ------------------------------------------------------------------
    # roles

    def _serve_ui(self, conn) -> None:
        with self._ui_lock:
            self._ui_clients.add(conn)
        conn.send_json(self._status_obj())
        try:
            while self._running:
                obj = conn.recv_json()
                if obj is None:
                    return
                self._handle_ui_message(conn, obj)
        finally:
            self._drop_ui(conn)

    def _handle_ui_message(self, conn, obj: dict) -> None:
        kind = obj.get("type")
        if kind == "response":
            choice = obj.get("condition")
            if not isinstance(choice, str):
                conn.send_json({"type": "response_rejected", "reason": "no condition"})
                return
            if self._live_responder is not None:
                if not self._live_responder.submit(choice):
                    conn.send_json({"type": "response_rejected",
                                    "reason": "outside response window"})
            elif self._engine is not None:
                self._engine.send_json(obj)
            else:
                conn.send_json({"type": "response_rejected", "reason": "no session"})
        elif kind == "start_session":
            self._start_session(conn, obj)
        elif kind == "abort_session":
            if self._abort_event is not None:
                self._abort_event.set()
            if self._live_responder is not None:
                self._live_responder.abort()
            if self._engine is not None:
                self._engine.send_json(obj)
        elif kind == "status":
            conn.send_json(self._status_obj())
        elif kind == "hello":
            pass
        else:
            conn.send_json({"type": "error", "code": "PROTOCOL",
                            "detail": f"unknown bridge message {kind!r}"})

    def _serve_engine(self, conn: _LineConn) -> None:
        if self._engine is not None or self._session_active:
            conn.send_json({"type": "error", "code": "BUSY",
                            "detail": "another session source is active"})
            conn.close()
            return
        self._engine = conn
        conn.send_json({"type": "hello", "role": "bridge"})
        self.broadcast(self._status_obj())
        try:
            while self._running:
                obj = conn.recv_json()
                if obj is None:
                    return
                self.broadcast(obj)
        finally:
            self._engine = None
            self._session_active = False
            self.broadcast(self._status_obj())
            conn.close()

    # ------------------------------------------------------------------
    # in-process live sessions

    def _start_session(self, conn, obj: dict) -> None:
        with self._session_lock:
            if self._session_active or (
                    self._session_thread is not None and self._session_thread.is_alive()):
                conn.send_json({"type": "error", "code": "BUSY",
                                "detail": "a session is already running"})
                return
            if self._engine is not None:
                conn.send_json({"type": "error", "code": "BUSY",
                                "detail": "an external engine owns the session"})
                return
            try:
                plan = SessionPlan(
                    repetitions=int(obj.get("repetitions", 1)),
                    conditions=tuple(obj.get("conditions",
                                             ("EL", "EH", "SL", "SH"))),
                    isi_s=float(obj.get("isi_s", 3.0)),
                    rng_seed=int(obj.get("seed", int(time.time()) & 0x7FFFFFFF)),
                    response_timeout_s=float(obj.get("response_timeout_s", 30.0)),
                    label=str(obj.get("label", "")),
                )
            except (TypeError, ValueError) as exc:
                conn.send_json({"type": "error", "code": "BAD_COMMAND",
                                "detail": f"bad session plan: {exc}"})
                return
            self._session_active = True
            self._live_responder = LiveResponder()
            self._abort_event = threading.Event()
            self._session_thread = threading.Thread(
                target=self._session_body, args=(plan,), daemon=True,
                name="edgesim-live-session")
            self._session_thread.start()

    def _session_body(self, plan: SessionPlan) -> None:
        client = LocalDeviceClient(self.runtime)
        clock = WallClock()
        responder = self._live_responder
        abort_event = self._abort_event
        records = []
        complete = False
        try:
            state = client.request(Status())
            for axis, flag in (("surface", state.calibrated_surface),
                               ("edge", state.calibrated_edge)):
                if not flag:
                    self.broadcast({"type": "calibrating", "axis": axis})
                    client.request(Calibrate(axis))
                    while client.request(Status()).moving:
                        if abort_event.is_set():
                            raise SessionAborted([], "aborted during calibration")
                        clock.sleep_s(0.02)
            records = run_session(plan, client, responder, clock=clock,
                                  event_sink=self.broadcast,
                                  abort_event=abort_event)
            complete = True
        except SessionAborted as exc:
            records = exc.records
        finally:
            self._live_responder = None
            self._abort_event = None
            self._session_active = False
            if records and self.session_dir:
                self._write_logs(plan, records, complete)

    def _write_logs(self, plan: SessionPlan, records, complete: bool) -> None:
        os.makedirs(self.session_dir, exist_ok=True)
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        name = f"{plan.label or 'session'}-{stamp}"
        stats = compute_stats(records, plan.conditions) if records else None
        export_csv(records, os.path.join(self.session_dir, name + ".csv"))
        export_structured(records, stats, os.path.join(self.session_dir, name + ".json"),
                          complete=complete, label=plan.label)

    # ------------------------------------------------------------------
    # heatmap preview

    def _preview_loop(self) -> None:
        interval = 1.0 / self.preview_rate_hz
        while self._running:
            time.sleep(interval)
            with self._ui_lock:
                has_clients = bool(self._ui_clients)
            if not has_clients:
                continue
            frame = self.runtime.synth_frame()
            self.broadcast(frame.to_message().to_dict())


class EngineBridgeLink:
    """Engine-process side of the bridge: publish events, receive responses.

    ``publish`` plugs in as a session's event sink; incoming response
    messages feed the given live responder, and an abort request trips
    the session's abort event.
    """

    def __init__(self, address: tuple[str, int], responder: LiveResponder,
                 abort_event: threading.Event, timeout_s: float = 5.0):
        self.sock = socket.create_connection(address, timeout=timeout_s)
        self.sock.settimeout(None)
        self.conn = _LineConn(self.sock, None)
        self.responder = responder
        self.abort_event = abort_event
        self.conn.send_json({"type": "hello", "role": "engine"})
        ack = self.conn.recv_json()
        if ack is None or ack.get("type") == "error":
            detail = (ack or {}).get("detail", "bridge refused the engine link")
            raise ConnectionError(detail)
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name="edgesim-engine-link")
        self._reader.start()

    def publish(self, event: dict) -> None:
        self.conn.send_json(event)

    def _read_loop(self) -> None:
        while True:
            obj = self.conn.recv_json()
            if obj is None:
                # bridge gone: a live session cannot continue without it
                self.abort_event.set()
                self.responder.abort()
                return
            kind = obj.get("type")
            if kind == "response" and isinstance(obj.get("condition"), str):
                self.responder.submit(obj["condition"])
            elif kind == "abort_session":
                self.abort_event.set()
                self.responder.abort()

    def close(self) -> None:
        self.conn.close()


def _read_line(sock: socket.socket, limit: int = 8192) -> bytes | None:
    """Read one CRLF/LF-terminated line without buffering past it."""
    buf = bytearray()
    while len(buf) < limit:
        try:
            ch = sock.recv(1)
        except socket.timeout:
            return None
        if not ch:
            return None if not buf else bytes(buf)
        if ch == b"\n":
            return bytes(buf).rstrip(b"\r")
        buf += ch
    return bytes(buf)
