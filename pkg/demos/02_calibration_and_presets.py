"""Calibrate the virtual device and tour the stimulus presets.

The device only trusts positions after calibration: each axis drives into
its hard stop, retracts a fixed number of whole steps, and calls that
zero. Watch the simulated clock to see the slow geared edge axis.

Run: python3 demos/02_calibration_and_presets.py
"""

from edgesim.device import Device, preset_targets
from edgesim.protocol import Calibrate, Preset

dev = Device()
presets = preset_targets(dev.cfg)


def stamp() -> str:
    return f"t={dev.clock_ms / 1000:7.2f} s"


print(f"{stamp()}  boot: calibrated_surface={dev.surface.calibrated}, "
      f"calibrated_edge={dev.edge.calibrated}")

for axis in ("surface", "edge"):
    dev.apply(Calibrate(axis))
    elapsed = dev.run_until_idle(dt_ms=5.0)
    print(f"{stamp()}  {axis} calibrated in {elapsed / 1000:.2f} s of motion; "
          f"zero set, hard stop at +{getattr(dev, axis).stop_mm:.4f} mm")

print()
print("preset tour (positions settle on the motor step grid):")
for condition in ("EL", "EH", "SL", "SH", "NC"):
    dev.apply(Preset(condition))
    elapsed = dev.run_until_idle(dt_ms=5.0)
    nominal = presets[condition]
    print(f"{stamp()}  {condition}: commanded {nominal} mm, settled "
          f"({dev.surface.pos_mm:+.4f}, {dev.edge.pos_mm:+.4f}) mm "
          f"after {elapsed / 1000:.2f} s")

print()
print("out-of-range commands are rejected, never clamped:")
from edgesim.device import DeviceError
from edgesim.protocol import Move

try:
    dev.apply(Move(surface_mm=2.5 * dev.cfg.a_mm))
except DeviceError as err:
    print(f"  {err.code}: {err.detail}")
