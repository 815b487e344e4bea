"""Host-side access to a device: TCP client, in-process client, clocks.

Both client flavors expose the same ``request()`` surface, so the
experiment engine can drive a device over the wire (the real setup) or
in-process against a virtual clock (fast deterministic sessions).
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from edgesim.device import Device, DeviceError, FSRFrame
from edgesim.protocol import ErrorMsg, Frame, Hello, Message, decode, encode

DEFAULT_ADDRESS = "127.0.0.1:9901"
ADDRESS_ENV_VAR = "EDGESIM_ADDR"


class TransportError(Exception):
    """Connection-level failure, distinct from an in-protocol error reply."""


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port_text = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"address must be host:port, got {text!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"address must be host:port, got {text!r}") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    return host, port


class DeviceRuntime:
    """Thread-safe owner of one Device: all access goes through the lock.

    Commands and ticks are serialized, which is the device's whole
    concurrency contract; there is never more than one logical operator.
    """

    def __init__(self, device: Device | None = None):
        self.device = device if device is not None else Device()
        self.lock = threading.RLock()

    def apply(self, msg: Message) -> Message:
        """Apply a command; device rejections become error replies."""
        with self.lock:
            try:
                return self.device.apply(msg)
            except DeviceError as exc:
                return ErrorMsg(exc.code, exc.detail)

    def tick(self, dt_ms: float) -> list[FSRFrame]:
        with self.lock:
            self.device.tick(dt_ms)
            return self.device.due_frames()

    def synth_frame(self) -> FSRFrame:
        with self.lock:
            return self.device.synth_frame()

    def stop_streaming(self) -> None:
        with self.lock:
            self.device.streaming = False

    def clock_ms(self) -> float:
        with self.lock:
            return self.device.clock_ms


class WallClock:
    """Real time; used when driving an actual server."""

    def now_ms(self) -> float:
        return time.monotonic() * 1000.0

    def sleep_s(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Simulated time owned by an in-process device runtime.

    Sleeping advances the device instead of blocking, so sessions run as
    fast as the CPU allows while keeping exact simulated timing.
    """

    def __init__(self, runtime: DeviceRuntime):
        self.runtime = runtime

    def now_ms(self) -> float:
        return self.runtime.clock_ms()

    def sleep_s(self, seconds: float) -> None:
        if seconds > 0:
            self.runtime.tick(seconds * 1000.0)


class LocalDeviceClient:
    """In-process stand-in for a protocol connection."""

    def __init__(self, runtime: DeviceRuntime):
        self.runtime = runtime
        self.hello = Hello()

    def request(self, msg: Message) -> Message:
        return self.runtime.apply(msg)

    def close(self) -> None:
        pass


class EdgeSimClient:
    """Blocking TCP client for the wire protocol.

    ``request`` returns the response to the given command; any frames
    that arrive while waiting are buffered and can be drained with the
    frame accessors in timestamp order.
    """

    def __init__(self, address: str | tuple[str, int] = DEFAULT_ADDRESS,
                 timeout_s: float = 2.0):
        if isinstance(address, str):
            address = parse_address(address)
        self.timeout_s = timeout_s
        try:
            self._sock = socket.create_connection(address, timeout=timeout_s)
        except OSError as exc:
            raise TransportError(f"cannot connect to {address[0]}:{address[1]}: {exc}") from None
        self._reader = self._sock.makefile("rb")
        self._frames: deque[Frame] = deque()
        hello = self._read_message()
        if not isinstance(hello, Hello):
            raise TransportError(f"expected hello handshake, got {hello!r}")
        self.hello = hello

    def _read_message(self) -> Message:
        try:
            line = self._reader.readline()
        except (socket.timeout, TimeoutError):
            raise TransportError(f"no response within {self.timeout_s} s") from None
        except OSError as exc:
            raise TransportError(f"connection lost: {exc}") from None
        if not line:
            raise TransportError("connection closed by server")
        return decode(line)

    def request(self, msg: Message) -> Message:
        """Send one command and return its (non-frame) response."""
        try:
            self._sock.sendall(encode(msg))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from None
        while True:
            reply = self._read_message()
            if isinstance(reply, Frame):
                self._frames.append(reply)
                continue
            return reply

    def next_frame(self) -> Frame:
        """Next streamed frame in timestamp order (blocks up to timeout)."""
        if self._frames:
            return self._frames.popleft()
        while True:
            msg = self._read_message()
            if isinstance(msg, Frame):
                return msg
            # unsolicited non-frame traffic has no place here
            raise TransportError(f"expected frame, got {msg!r}")

    def collect_frames_until(self, t_ms: int) -> list[Frame]:
        """Read frames until one timestamped at or beyond ``t_ms`` arrives."""
        out = []
        while True:
            frame = self.next_frame()
            out.append(frame)
            if frame.t_ms >= t_ms:
                return out

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "EdgeSimClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
