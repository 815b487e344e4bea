"""Run a full scripted study session on simulated time.

The responder mislabels heavy plate contact as light 16% of the time;
the stats mirror how that shows up in per-condition accuracy and the
confusion matrix. Simulated time means the 20 trials with their 3 s
inter-stimulus intervals finish in milliseconds of wall time.

Run: python3 demos/05_scripted_study.py
"""

from edgesim.client import DeviceRuntime, LocalDeviceClient, VirtualClock
from edgesim.device import Device
from edgesim.experiment import (
    ConfusionResponder,
    SessionPlan,
    compute_stats,
    format_stats_table,
    run_session,
)
from edgesim.protocol import Calibrate, Status

runtime = DeviceRuntime(Device())
clock = VirtualClock(runtime)
client = LocalDeviceClient(runtime)

for axis in ("surface", "edge"):
    client.request(Calibrate(axis))
    while client.request(Status()).moving:
        clock.sleep_s(0.05)

plan = SessionPlan(repetitions=5, isi_s=3.0, rng_seed=11)
responder = ConfusionResponder({"SH": [("SL", 0.16)]}, rng_seed=99, delay_s=1.2)
records = run_session(plan, client, responder, clock=clock)

print(f"{len(records)} trials in {clock.now_ms() / 1000:.1f} s of simulated time")
print()
stats = compute_stats(records, plan.conditions)
print(format_stats_table(stats))
print()
print("confusion matrix (rows presented, columns responded):")
header = "            " + "".join(f"{c:>6}" for c in stats.conditions)
print(header)
for cond, row in zip(stats.conditions, stats.confusion):
    print(f"  {cond:<10}" + "".join(f"{n:>6}" for n in row))
print()
print("first trials of the log:")
for rec in records[:5]:
    mark = "ok " if rec.correct else "ERR"
    print(f"  #{rec.index:02d} {rec.presented} -> {rec.responded} [{mark}] "
          f"RT {rec.response_time_s:.2f} s")
