"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion; any failure is reported by pytest as usual.
"""

from __future__ import annotations

import random
from collections import Counter

import numpy as np
import pytest

from edgesim.analytics import band_ratio, calibrate_thresholds, classify
from edgesim.client import (
    DeviceRuntime,
    EdgeSimClient,
    LocalDeviceClient,
    VirtualClock,
)
from edgesim.device import Device, FSRFrame, synth_condition_frames
from edgesim.experiment import (
    ConfusionResponder,
    PerfectResponder,
    SessionPlan,
    compute_stats,
    make_schedule,
    run_session,
)
from edgesim.mech import (
    EdgeDriveSpec,
    default_config,
    edge_effective_step_deg,
    edge_net_force_n,
    edge_steps_to_cable_mm,
    endurance_h,
    surface_steps_to_mm,
)
from edgesim.protocol import (
    AXES,
    CONDITIONS,
    ERROR_CODES,
    Calibrate,
    ErrorMsg,
    Frame,
    Hello,
    Move,
    Preset,
    State,
    Status,
    Stream,
    decode,
    encode,
)
from edgesim.server import DeviceServer

CFG = default_config()


def note(line: str) -> None:
    print(f"[PASS] {line}")


# ---------------------------------------------------------------------------

def test_kinematic_constants():
    full_rev = surface_steps_to_mm(20, CFG.surface)
    assert full_rev == 0.300, "one revolution must be exactly 0.300 mm"
    per_step = surface_steps_to_mm(1, CFG.surface)
    assert per_step == 0.015, "per-step travel must be exactly 0.015 mm"
    eff = edge_effective_step_deg(CFG.edge)
    assert abs(eff - 0.6805) <= 0.005
    note(f"kinematic constants: rev={full_rev} mm, step={per_step} mm, "
         f"effective step angle={eff:.4f} deg")


def test_force_chain():
    no_spring = EdgeDriveSpec(
        motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
        spool_radius_mm=5.0, max_cable_tension_n=2.21, spring_force_n=0.0)
    peak = edge_net_force_n(2.21, no_spring)
    assert peak == pytest.approx(5.8123, abs=1e-9)
    assert abs(peak - 5.8) <= 0.05
    rng = random.Random(20240817)
    for _ in range(10_000):
        spring = rng.uniform(0.0, 5.0)
        spec = EdgeDriveSpec(
            motor=CFG.edge.motor, gear_ratio=26.45, lever_gain=2.63,
            spool_radius_mm=5.0, max_cable_tension_n=2.21,
            spring_force_n=spring)
        force = edge_net_force_n(rng.uniform(0.0, 2.21), spec)
        assert force >= 0.0
    note(f"force chain: peak={peak:.4f} N (within 0.05 of 5.8), "
         f"non-negative over 10^4 fuzzed tension/spring pairs")


def test_endurance():
    hours = endurance_h(CFG.power)
    assert CFG.power.energy_wh == pytest.approx(7.4)
    assert hours == pytest.approx(5.78, abs=0.005)
    assert hours >= 4.0
    note(f"endurance: {hours:.2f} h on 7.4 Wh with both motors active (>= 4 h)")


def test_calibration_preset_conformance():
    surface_half = CFG.surface.mm_per_step / 2
    edge_half = edge_steps_to_cable_mm(1, CFG.edge) / 2
    nominal = {
        "EL": (0.35, 1.5), "EH": (0.70, 3.0),
        "SL": (0.35, -1.5), "SH": (0.70, -1.5), "NC": (-0.35, -1.5),
    }
    dev = Device()
    for axis in ("surface", "edge"):
        dev.apply(Calibrate(axis))
        dev.run_until_idle(dt_ms=5.0)
    assert dev.surface.calibrated and dev.edge.calibrated
    worst = 0.0
    for condition, (surface_mm, edge_mm) in nominal.items():
        dev.apply(Preset(condition))
        dev.run_until_idle(dt_ms=5.0)
        ds = abs(dev.surface.pos_mm - surface_mm)
        de = abs(dev.edge.pos_mm - edge_mm)
        assert ds <= surface_half + 1e-12, f"{condition}: surface off by {ds}"
        assert de <= edge_half + 1e-12, f"{condition}: edge off by {de}"
        worst = max(worst, ds / surface_half, de / edge_half)
    note(f"calibration/preset conformance: all five presets within half-step "
         f"(worst at {worst:.2f} of the bound)")


# ---------------------------------------------------------------------------

def _random_message(rng: random.Random):
    kind = rng.randrange(9)
    f = lambda lo, hi: rng.uniform(lo, hi)
    if kind == 0:
        return Hello(version=rng.randrange(1, 1000))
    if kind == 1:
        return Calibrate(rng.choice(AXES))
    if kind == 2:
        which = rng.randrange(3)
        if which == 0:
            return Move(surface_mm=f(-6.5, 6.5))
        if which == 1:
            return Move(edge_mm=f(-5, 5))
        return Move(surface_mm=f(-6.5, 6.5), edge_mm=f(-5, 5))
    if kind == 3:
        return Preset(rng.choice(CONDITIONS))
    if kind == 4:
        return Status()
    if kind == 5:
        return State(f(-10, 10), f(-10, 10), rng.random() < 0.5,
                     rng.random() < 0.5, rng.random() < 0.5)
    if kind == 6:
        return Stream(rng.random() < 0.5, f(0.1, 500))
    if kind == 7:
        return Frame(t_ms=rng.randrange(0, 2**40),
                     cells=tuple(f(0, 100) for _ in range(36)))
    return ErrorMsg(rng.choice(sorted(ERROR_CODES)), f"detail {rng.random()}")


def test_protocol_codec_identity_and_server_fuzz():
    rng = random.Random(0xED6E)
    for _ in range(10_000):
        msg = _random_message(rng)
        assert decode(encode(msg)) == msg

    server = DeviceServer(DeviceRuntime(), host="127.0.0.1", port=0,
                          time_scale=50.0, tick_interval_s=0.002)
    server.start()
    try:
        host, port = server.address
        with EdgeSimClient(f"{host}:{port}", timeout_s=10.0) as client:
            total, chunk = 100_000, 1000
            for _ in range(total // chunk):
                batch = []
                for _ in range(chunk):
                    n = rng.randrange(0, 48)
                    blob = bytes(rng.randrange(1, 256) for _ in range(n))
                    batch.append(blob.replace(b"\n", b" ") + b"\n")
                client._sock.sendall(b"".join(batch))
                for _ in range(chunk):
                    reply = client._read_message()
                    assert isinstance(reply, ErrorMsg) and reply.code == "PROTOCOL"
            assert isinstance(client.request(Status()), State)
    finally:
        server.stop()
    note("protocol codec: decode(encode(m)) == m on 10^4 generated messages; "
         "10^5 fuzz lines -> PROTOCOL errors, server alive")


def test_streaming_rate_over_simulated_time():
    server = DeviceServer(DeviceRuntime(), host="127.0.0.1", port=0,
                          time_scale=100.0, tick_interval_s=0.002)
    server.start()
    try:
        host, port = server.address
        with EdgeSimClient(f"{host}:{port}", timeout_s=10.0) as client:
            client.request(Stream(enable=True, rate_hz=10.0))
            first = client.next_frame()
            frames = [first] + client.collect_frames_until(first.t_ms + 10_000)
            window = [f for f in frames if f.t_ms < first.t_ms + 10_000]
            times = [f.t_ms for f in frames]
            assert all(a < b for a, b in zip(times, times[1:])), \
                "timestamps must strictly increase"
            assert abs(len(window) - 100) <= 1, f"got {len(window)} frames in 10 s"
    finally:
        server.stop()
    note(f"streaming: {len(window)} frames over 10 s of simulated time at 10 Hz "
         f"(100 +/- 1), timestamps strictly increasing")


def test_classifier_accuracy_on_simulator_corpus():
    ratio = band_ratio(FSRFrame(0, np.ones((6, 6))))
    assert ratio == 1 / 3, "uniform frame band ratio must be exactly 1/3"

    thresholds = calibrate_thresholds(
        synth_condition_frames("EL", 10, rng_seed=101)
        + synth_condition_frames("SL", 10, rng_seed=102),
        synth_condition_frames("EH", 10, rng_seed=103)
        + synth_condition_frames("SH", 10, rng_seed=104),
    )
    geometry_hits = four_way_hits = total = 0
    for condition in ("EL", "EH", "SL", "SH"):
        for frame in synth_condition_frames(condition, 100, rng_seed=777):
            result = classify(frame, thresholds)
            geometry_hits += result.condition_label[0] == condition[0]
            four_way_hits += result.condition_label == condition
            total += 1
    geometry_acc = geometry_hits / total
    four_way_acc = four_way_hits / total
    assert geometry_acc >= 0.99, f"geometry accuracy {geometry_acc:.3f}"
    assert four_way_acc >= 0.95, f"4-way accuracy {four_way_acc:.3f}"
    note(f"classifier: geometry {geometry_acc:.1%}, 4-way {four_way_acc:.1%} "
         f"on 100 settled frames per condition (noise + outliers on); "
         f"uniform band ratio = 1/3 exactly")


# ---------------------------------------------------------------------------

def _fresh_rig():
    runtime = DeviceRuntime(Device())
    clock = VirtualClock(runtime)
    client = LocalDeviceClient(runtime)
    for axis in ("surface", "edge"):
        client.request(Calibrate(axis))
        while client.request(Status()).moving:
            clock.sleep_s(0.1)
    return client, clock


def test_session_engine_counts_and_confusion_convergence():
    # schedule multiset invariance for every seed
    for seed in range(1000):
        plan = SessionPlan(rng_seed=seed)
        assert Counter(make_schedule(plan)) == {c: 5 for c in plan.conditions}

    # a full scripted session yields exactly 5 records per condition
    for seed in (0, 17, 404):
        client, clock = _fresh_rig()
        plan = SessionPlan(rng_seed=seed, settle_poll_s=0.25)
        records = run_session(plan, client, PerfectResponder(), clock=clock)
        assert Counter(r.presented for r in records) == \
            {c: 5 for c in plan.conditions}
        stats = compute_stats(records, plan.conditions)
        assert stats.overall_accuracy == 1.0

    # confused responder converges to the shaped accuracy
    sh_correct = sh_total = 0
    for seed in range(200):
        client, clock = _fresh_rig()
        plan = SessionPlan(rng_seed=seed, settle_poll_s=0.5)
        responder = ConfusionResponder({"SH": [("SL", 0.16)]}, rng_seed=seed + 9000)
        records = run_session(plan, client, responder, clock=clock)
        sh_records = [r for r in records if r.presented == "SH"]
        sh_correct += sum(r.correct for r in sh_records)
        sh_total += len(sh_records)
    sh_accuracy = sh_correct / sh_total
    assert abs(sh_accuracy - 0.84) <= 0.03, f"SH accuracy {sh_accuracy:.4f}"
    note(f"session engine: 5 records/condition over 10^3 seeds; perfect "
         f"responder accuracy 1.0; SH->SL:0.16 converges to SH accuracy "
         f"{sh_accuracy:.3f} (0.84 +/- 0.03 over 200 sessions)")


def test_stats_oracle_rt_fixture():
    from edgesim.experiment import TrialRecord

    rts = {"EL": 2.91, "EH": 3.20, "SL": 2.57, "SH": 2.47}
    records = [
        TrialRecord(index=i, presented=c, responded=c, correct=True,
                    response_time_s=rt, t_command_ms=i * 10_000.0,
                    t_settle_ms=i * 10_000.0 + 500.0,
                    t_response_ms=i * 10_000.0 + rt * 1000.0)
        for i, (c, rt) in enumerate(rts.items())
    ]
    stats = compute_stats(records, tuple(rts))
    assert abs(stats.overall_mean_rt_s - 2.7875) < 1e-12
    assert round(stats.overall_mean_rt_s, 2) == 2.79
    note(f"stats oracle: RT fixture mean = {stats.overall_mean_rt_s} s "
         f"(2.79 to 2 decimals)")
