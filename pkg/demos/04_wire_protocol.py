"""Drive the device endpoint over its wire protocol, end to end.

Starts a server in-process (at 50x real time so the geared axis settles
quickly), calibrates over the wire, runs a preset, streams one second of
frames, and shows that garbage on the wire gets an error, not a crash.

Run: python3 demos/04_wire_protocol.py
"""

import time

from edgesim.client import DeviceRuntime, EdgeSimClient
from edgesim.protocol import Calibrate, Move, Preset, Status, Stream, encode
from edgesim.server import DeviceServer

server = DeviceServer(DeviceRuntime(), host="127.0.0.1", port=0, time_scale=50.0)
server.start()
host, port = server.address
print(f"device endpoint on {host}:{port} (50x time scale)")

with EdgeSimClient(f"{host}:{port}", timeout_s=10.0) as client:
    print(f"handshake: server says {client.hello}")

    def wait_settled():
        while True:
            state = client.request(Status())
            if not state.moving:
                return state
            time.sleep(0.01)

    for axis in ("surface", "edge"):
        print(f"> calibrate {axis}")
        client.request(Calibrate(axis))
        wait_settled()

    print("> preset SH")
    client.request(Preset("SH"))
    state = wait_settled()
    print(f"  settled at surface={state.surface_mm:+.4f} mm, "
          f"edge={state.edge_mm:+.4f} mm")

    print("> stream 10 Hz for 1 s of device time")
    client.request(Stream(enable=True, rate_hz=10.0))
    first = client.next_frame()
    frames = [first] + client.collect_frames_until(first.t_ms + 900)
    client.request(Stream(enable=False))
    print(f"  {len(frames)} frames, t_ms {frames[0].t_ms} .. {frames[-1].t_ms}, "
          f"peak cell {max(max(f.cells) for f in frames):.3f}")

    print("> now some abuse:")
    for line in (b"EXPLODE\n", b'{"type":"warp","x":1}\n'):
        client._sock.sendall(line)
        print(f"  sent {line!r} -> {client._read_message()}")
    print(f"  sent {encode(Move(surface_mm=99))!r} -> "
          f"{client.request(Move(surface_mm=99))}")
    print("  connection still alive:", client.request(Status()))

server.stop()
print("server stopped cleanly")
