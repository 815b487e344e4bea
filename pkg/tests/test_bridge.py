from __future__ import annotations

import base64
import hashlib
import json
import os
import socket
import threading
import time

import pytest

from edgesim.bridge import BridgeHub, EngineBridgeLink
from edgesim.client import DeviceRuntime, EdgeSimClient
from edgesim.experiment import LiveResponder, SessionPlan, run_session
from edgesim.protocol import Calibrate, Status
from edgesim.server import DeviceServer


@pytest.fixture()
def rig(tmp_path):
    runtime = DeviceRuntime()
    server = DeviceServer(runtime, host="127.0.0.1", port=0,
                          time_scale=400.0, tick_interval_s=0.002)
    server.start()
    bridge = BridgeHub(runtime, host="127.0.0.1", port=0,
                       session_dir=str(tmp_path / "sessions"),
                       static_dir=str(tmp_path / "static"))
    bridge.start()
    yield server, bridge
    bridge.stop()
    server.stop()


class LineUi:
    """Line-mode stand-in for the browser client."""

    def __init__(self, address):
        self.sock = socket.create_connection(address, timeout=5.0)
        self.reader = self.sock.makefile("rb")
        self.send({"type": "hello", "role": "ui"})

    def send(self, obj):
        self.sock.sendall(json.dumps(obj).encode() + b"\n")

    def recv(self):
        line = self.reader.readline()
        if not line:
            raise ConnectionError("bridge closed")
        return json.loads(line)

    def expect(self, kind, deadline_s=10.0):
        end = time.monotonic() + deadline_s
        while time.monotonic() < end:
            obj = self.recv()
            if obj.get("type") == kind:
                return obj
        raise AssertionError(f"no {kind} message within {deadline_s}s")

    def close(self):
        self.sock.close()


class WsUi:
    """Just enough RFC 6455 client to stand in for a browser."""

    def __init__(self, address):
        self.sock = socket.create_connection(address, timeout=5.0)
        self._buffer = b""
        key = base64.b64encode(os.urandom(16)).decode()
        self.sock.sendall(
            (f"GET /live HTTP/1.1\r\nHost: {address[0]}\r\n"
             f"Upgrade: websocket\r\nConnection: Upgrade\r\n"
             f"Sec-WebSocket-Key: {key}\r\n"
             f"Sec-WebSocket-Version: 13\r\n\r\n").encode())
        status = self._read_headers()
        assert b"101" in status[0]
        accept = base64.b64encode(hashlib.sha1(
            (key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest())
        assert any(accept in line for line in status)

    def _read_headers(self):
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = self.sock.recv(1024)
            assert chunk, "connection closed during handshake"
            data += chunk
        head, _, rest = data.partition(b"\r\n\r\n")
        self._buffer = rest  # frames can ride the same segment as the 101
        return head.split(b"\r\n")

    def _read_exact(self, n):
        while len(self._buffer) < n:
            chunk = self.sock.recv(n - len(self._buffer))
            if not chunk:
                raise ConnectionError("closed")
            self._buffer += chunk
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def send(self, obj):
        payload = json.dumps(obj).encode()
        mask = os.urandom(4)
        header = bytearray([0x81])
        n = len(payload)
        if n < 126:
            header.append(0x80 | n)
        else:
            header.append(0x80 | 126)
            header += n.to_bytes(2, "big")
        body = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.sock.sendall(bytes(header) + mask + body)

    def recv(self):
        head = self._read_exact(2)
        opcode = head[0] & 0x0F
        length = head[1] & 0x7F
        if length == 126:
            length = int.from_bytes(self._read_exact(2), "big")
        elif length == 127:
            length = int.from_bytes(self._read_exact(8), "big")
        payload = self._read_exact(length)
        if opcode == 0x8:
            raise ConnectionError("server closed")
        return json.loads(payload)

    def expect(self, kind, deadline_s=10.0):
        end = time.monotonic() + deadline_s
        while time.monotonic() < end:
            obj = self.recv()
            if obj.get("type") == kind:
                return obj
        raise AssertionError(f"no {kind} within {deadline_s}s")

    def close(self):
        self.sock.close()


# ---------------------------------------------------------------------------

def test_line_ui_gets_bridge_status(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    status = ui.expect("bridge_status")
    assert status["engine_connected"] is False
    assert status["session_active"] is False
    assert status["device"]["calibrated_surface"] is False
    ui.close()


def test_ws_handshake_status_and_preview_frames(rig):
    _, bridge = rig
    ws = WsUi(bridge.address)
    status = ws.expect("bridge_status")
    assert status["session_active"] is False
    frame = ws.expect("frame", deadline_s=5.0)
    assert len(frame["cells"]) == 36
    ws.send({"type": "status"})
    ws.expect("bridge_status")
    ws.close()


def test_response_without_session_rejected(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "response", "condition": "EL"})
    reply = ui.expect("response_rejected")
    assert "no session" in reply["reason"]
    ui.close()


def run_live_session(ui: LineUi, answers: list[str], presses_during_isi=False):
    """Drive one bridge-run session; returns (records, session_end event)."""
    records = []
    answered = 0
    while True:
        msg = ui.recv()
        kind = msg.get("type")
        if kind == "await_response":
            ui.send({"type": "response", "condition": answers[answered],
                     "t_client_ms": time.time() * 1000})
            answered += 1
        elif kind == "trial_end":
            records.append(msg["record"])
            if presses_during_isi:
                ui.send({"type": "response", "condition": "SH"})
        elif kind == "session_end":
            return records, msg


def test_in_process_live_session_four_trials(rig, tmp_path):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "start_session", "repetitions": 1, "isi_s": 0.05,
             "seed": 5, "label": "live-test"})
    start = ui.expect("session_start", deadline_s=15.0)
    assert start["total"] == 4
    records, end = run_live_session(ui, ["EL", "EL", "EL", "EL"])
    assert len(records) == 4
    assert end["complete"] is True
    assert all(r["responded"] == "EL" for r in records)
    for rec in records:
        assert rec["correct"] == (rec["presented"] == "EL")
        assert rec["response_time_s"] > 0
    # engine-side log written with matching stats
    time.sleep(0.3)
    session_dir = bridge.session_dir
    logs = [f for f in os.listdir(session_dir) if f.endswith(".json")]
    assert len(logs) == 1
    with open(os.path.join(session_dir, logs[0])) as fh:
        doc = json.load(fh)
    assert doc["complete"] is True
    assert len(doc["records"]) == 4
    assert doc["stats"]["overall_accuracy"] == end["stats"]["overall_accuracy"]
    ui.close()


def test_isi_presses_never_produce_records(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "start_session", "repetitions": 1, "isi_s": 0.2, "seed": 1})
    ui.expect("session_start", deadline_s=15.0)
    records, end = run_live_session(ui, ["SL"] * 4, presses_during_isi=True)
    assert len(records) == 4  # exactly one record per trial, none extra
    assert end["stats"]["trials"] == 4
    ui.close()


def test_double_press_single_record(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "start_session", "repetitions": 1, "conditions": ["EL", "SH"],
             "isi_s": 0.05, "seed": 2})
    ui.expect("session_start", deadline_s=15.0)
    records = []
    while True:
        msg = ui.recv()
        if msg.get("type") == "await_response":
            ui.send({"type": "response", "condition": "EH"})
            ui.send({"type": "response", "condition": "SL"})  # double press
        elif msg.get("type") == "trial_end":
            records.append(msg["record"])
        elif msg.get("type") == "session_end":
            break
    assert len(records) == 2
    assert all(r["responded"] == "EH" for r in records)  # first press wins
    ui.close()


def test_abort_session_flushes_partial(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "start_session", "repetitions": 2, "isi_s": 0.05, "seed": 3})
    ui.expect("session_start", deadline_s=15.0)
    ui.expect("await_response")
    ui.send({"type": "response", "condition": "EL"})
    ui.expect("trial_end")
    ui.send({"type": "abort_session"})
    end = ui.expect("session_end")
    assert end["complete"] is False
    ui.close()


def test_second_session_while_active_rejected(rig):
    _, bridge = rig
    ui = LineUi(bridge.address)
    ui.expect("bridge_status")
    ui.send({"type": "start_session", "repetitions": 1, "isi_s": 0.05, "seed": 4})
    ui.expect("session_start", deadline_s=15.0)
    ui.send({"type": "start_session", "repetitions": 1})
    err = ui.expect("error")
    assert err["code"] == "BUSY"
    ui.send({"type": "abort_session"})
    ui.expect("session_end")
    ui.close()


def test_external_engine_via_bridge_link(rig):
    server, bridge = rig
    host, port = server.address

    ui = LineUi(bridge.address)
    ui.expect("bridge_status")

    responder = LiveResponder()
    abort_event = threading.Event()
    link = EngineBridgeLink(bridge.address, responder, abort_event)
    results = {}

    def engine_body():
        with EdgeSimClient(f"{host}:{port}", timeout_s=10.0) as client:
            for axis in ("surface", "edge"):
                client.request(Calibrate(axis))
                while client.request(Status()).moving:
                    time.sleep(0.005)
            plan = SessionPlan(repetitions=1, conditions=("EL", "SH"),
                               isi_s=0.05, rng_seed=9)
            results["records"] = run_session(
                plan, client, responder, event_sink=link.publish,
                abort_event=abort_event)

    engine = threading.Thread(target=engine_body, daemon=True)
    engine.start()
    records, end = run_live_session(ui, ["SH", "SH"])
    engine.join(timeout=15.0)
    assert not engine.is_alive()
    assert len(results["records"]) == 2
    assert [r.responded for r in results["records"]] == ["SH", "SH"]
    assert end["complete"] is True
    link.close()
    ui.close()


def test_static_file_serving(rig, tmp_path):
    _, bridge = rig
    static = tmp_path / "static"
    static.mkdir(exist_ok=True)
    (static / "index.html").write_text("<html>edge ui</html>")
    sock = socket.create_connection(bridge.address, timeout=5.0)
    sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
    data = b""
    while True:
        chunk = sock.recv(4096)
        if not chunk:
            break
        data += chunk
    assert b"200 OK" in data and b"edge ui" in data
    sock.close()
    # path traversal stays inside the static root
    sock = socket.create_connection(bridge.address, timeout=5.0)
    sock.sendall(b"GET /../secret HTTP/1.1\r\nHost: x\r\n\r\n")
    data = sock.recv(4096)
    assert b"404" in data
    sock.close()
