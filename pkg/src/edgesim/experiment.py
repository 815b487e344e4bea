"""Psychophysics session engine.

A session presents a randomized schedule of stimulus conditions through a
device client, collects one response per trial (from a scripted responder
or a live human interface), and logs per-trial timing. Between trials the
device returns to the no-contact position for a fixed inter-stimulus
interval, clocked from the moment that retraction settles.

Response time is clocked from preset-command issue, so it includes device
actuation time; the settle timestamp is logged alongside for analyses
that prefer a perception-onset origin.
"""

from __future__ import annotations

import csv
import json
import random
import threading
import queue as queue_mod
from dataclasses import dataclass, field

from edgesim.client import TransportError, WallClock
from edgesim.protocol import ErrorMsg, Preset, State, Status

STIMULUS_CONDITIONS = ("EL", "EH", "SL", "SH")


class SessionAborted(Exception):
    """Session stopped early; partial records ride along for the log."""

    def __init__(self, records: list["TrialRecord"], cause: str):
        super().__init__(cause)
        self.records = records
        self.cause = cause


@dataclass(frozen=True)
class SessionPlan:
    repetitions: int = 5
    conditions: tuple[str, ...] = STIMULUS_CONDITIONS
    isi_s: float = 3.0
    rng_seed: int = 0
    response_timeout_s: float = 30.0
    settle_poll_s: float = 0.02
    settle_timeout_s: float = 120.0
    label: str = ""

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.conditions:
            raise ValueError("conditions must be non-empty")
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("conditions must be distinct")
        unknown = set(self.conditions) - set(STIMULUS_CONDITIONS)
        if unknown:
            raise ValueError(f"unknown stimulus conditions: {sorted(unknown)}")
        if self.isi_s < 0 or self.response_timeout_s <= 0:
            raise ValueError("intervals must be positive")

    @property
    def total_trials(self) -> int:
        return self.repetitions * len(self.conditions)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    presented: str
    responded: str | None
    correct: bool
    response_time_s: float
    t_command_ms: float
    t_settle_ms: float
    t_response_ms: float

    def __post_init__(self) -> None:
        if self.correct != (self.presented == self.responded):
            raise ValueError("correct flag contradicts presented/responded pair")
        if self.response_time_s <= 0:
            raise ValueError("response_time_s must be positive")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "presented": self.presented,
            "responded": self.responded,
            "correct": self.correct,
            "response_time_s": self.response_time_s,
            "t_command_ms": self.t_command_ms,
            "t_settle_ms": self.t_settle_ms,
            "t_response_ms": self.t_response_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            index=int(d["index"]),
            presented=str(d["presented"]),
            responded=None if d["responded"] in (None, "") else str(d["responded"]),
            correct=bool(d["correct"]),
            response_time_s=float(d["response_time_s"]),
            t_command_ms=float(d["t_command_ms"]),
            t_settle_ms=float(d["t_settle_ms"]),
            t_response_ms=float(d["t_response_ms"]),
        )


# ---------------------------------------------------------------------------
# schedule

def make_schedule(plan: SessionPlan) -> list[str]:
    """Uniform seeded permutation of the repetitions x conditions multiset.

    The shuffle is an explicit descending Fisher-Yates over
    ``random.Random(plan.rng_seed)`` drawing ``randrange(i + 1)`` at each
    position, on the condition-major base list; the procedure is pinned
    so independent implementations can reproduce schedules from seeds.
    """
    base = [cond for cond in plan.conditions for _ in range(plan.repetitions)]
    rng = random.Random(plan.rng_seed)
    for i in range(len(base) - 1, 0, -1):
        j = rng.randrange(i + 1)
        base[i], base[j] = base[j], base[i]
    return base


# ---------------------------------------------------------------------------
# responders

class PerfectResponder:
    """Oracle responder: always names the presented condition."""

    def __init__(self, delay_s: float = 0.5):
        self.delay_s = delay_s

    def respond(self, index: int, presented: str, timeout_s: float):
        return presented, self.delay_s


class ConfusionResponder:
    """Scripted responder with seeded per-condition confusion rules.

    ``rules`` maps a presented condition to [(answered_as, probability),
    ...]; leftover probability mass answers correctly.
    """

    def __init__(self, rules: dict[str, list[tuple[str, float]]],
                 rng_seed: int = 0, delay_s: float = 0.5):
        for cond, alts in rules.items():
            total = sum(p for _, p in alts)
            if not 0.0 <= total <= 1.0:
                raise ValueError(f"confusion probabilities for {cond} exceed 1")
        self.rules = rules
        self.rng = random.Random(rng_seed)
        self.delay_s = delay_s

    def respond(self, index: int, presented: str, timeout_s: float):
        draw = self.rng.random()
        cumulative = 0.0
        for alternative, prob in self.rules.get(presented, ()):
            cumulative += prob
            if draw < cumulative:
                return alternative, self.delay_s
        return presented, self.delay_s


class SilentResponder:
    """Never answers; every trial times out as no-response."""

    def respond(self, index: int, presented: str, timeout_s: float):
        return None, timeout_s


_ABORT = object()


class LiveResponder:
    """Blocks on a queue fed by the UI bridge; one choice per trial."""

    def __init__(self):
        self.choices: queue_mod.Queue = queue_mod.Queue()
        self.armed = threading.Event()

    def submit(self, choice: str) -> bool:
        """Called by the bridge thread; rejected outside the response window."""
        if not self.armed.is_set():
            return False
        self.choices.put(choice)
        return True

    def abort(self) -> None:
        self.choices.put(_ABORT)

    def arm(self) -> None:
        """Open the response window; called before the UI learns about it.

        Stale presses from outside the window are discarded here, so a
        press during the inter-stimulus interval can never satisfy the
        following trial.
        """
        while True:
            try:
                stale = self.choices.get_nowait()
            except queue_mod.Empty:
                break
            if stale is _ABORT:
                raise SessionAborted([], "aborted by operator")
        self.armed.set()

    def respond(self, index: int, presented: str, timeout_s: float):
        if not self.armed.is_set():
            self.arm()
        try:
            choice = self.choices.get(timeout=timeout_s)
        except queue_mod.Empty:
            return None, 0.0
        finally:
            self.armed.clear()
        if choice is _ABORT:
            raise SessionAborted([], "aborted by operator")
        return choice, 0.0


def parse_responder_spec(spec: str, rng_seed: int = 0):
    """Build a responder from a CLI spec string.

    Forms: ``perfect``, ``perfect:<delay_s>``, ``silent``,
    ``confusion:SH->SL:0.16[,EH->EL:0.05]``.
    """
    if spec == "perfect":
        return PerfectResponder()
    if spec.startswith("perfect:"):
        return PerfectResponder(delay_s=float(spec.split(":", 1)[1]))
    if spec == "silent":
        return SilentResponder()
    if spec.startswith("confusion:"):
        rules: dict[str, list[tuple[str, float]]] = {}
        for clause in spec[len("confusion:"):].split(","):
            try:
                pair, prob_text = clause.rsplit(":", 1)
                presented, answered = pair.split("->")
                prob = float(prob_text)
            except ValueError:
                raise ValueError(f"bad confusion clause {clause!r}; "
                                 f"expected COND->COND:PROB") from None
            rules.setdefault(presented.strip(), []).append((answered.strip(), prob))
        return ConfusionResponder(rules, rng_seed=rng_seed)
    raise ValueError(f"unknown responder spec {spec!r}")


# ---------------------------------------------------------------------------
# session execution

def _await_settle(client, clock, poll_s: float, timeout_s: float) -> float:
    deadline = clock.now_ms() + timeout_s * 1000.0
    while True:
        reply = client.request(Status())
        if isinstance(reply, ErrorMsg):
            raise TransportError(f"status request rejected: {reply.detail}")
        assert isinstance(reply, State)
        if not reply.moving:
            return clock.now_ms()
        if clock.now_ms() > deadline:
            raise TransportError("device did not settle within timeout")
        clock.sleep_s(poll_s)


def run_session(plan: SessionPlan, client, responder,
                clock=None, event_sink=None,
                abort_event: threading.Event | None = None) -> list[TrialRecord]:
    """Run the full schedule; returns one record per trial.

    Transport failures and operator aborts raise :class:`SessionAborted`
    carrying the records completed so far, so callers can flush a partial
    log marked incomplete.
    """
    clock = clock if clock is not None else WallClock()
    emit = event_sink if event_sink is not None else (lambda event: None)
    schedule = make_schedule(plan)
    records: list[TrialRecord] = []

    def checked(msg):
        reply = client.request(msg)
        if isinstance(reply, ErrorMsg):
            raise SessionAborted(records, f"device rejected {msg}: {reply.detail}")
        return reply

    state = checked(Status())
    if not (state.calibrated_surface and state.calibrated_edge):
        raise SessionAborted(records, "both axes must be calibrated before a session")

    emit({"type": "session_start", "total": len(schedule),
          "conditions": list(plan.conditions), "label": plan.label})
    try:
        for index, condition in enumerate(schedule):
            if abort_event is not None and abort_event.is_set():
                raise SessionAborted(records, "aborted by operator")
            emit({"type": "trial_start", "index": index})
            t_command = clock.now_ms()
            checked(Preset(condition))
            t_settle = _await_settle(client, clock, plan.settle_poll_s,
                                     plan.settle_timeout_s)
            # open the response window before announcing it, so a press
            # issued the instant the event lands is never rejected
            arm = getattr(responder, "arm", None)
            if callable(arm):
                arm()
            emit({"type": "await_response", "index": index, "t0_ms": t_settle})
            choice, delay_s = responder.respond(index, condition,
                                                plan.response_timeout_s)
            if delay_s > 0:
                clock.sleep_s(delay_s)
            t_response = clock.now_ms()
            record = TrialRecord(
                index=index,
                presented=condition,
                responded=choice,
                correct=choice == condition,
                response_time_s=(t_response - t_command) / 1000.0,
                t_command_ms=t_command,
                t_settle_ms=t_settle,
                t_response_ms=t_response,
            )
            records.append(record)
            emit({"type": "trial_end", "record": record.to_dict()})
            checked(Preset("NC"))
            _await_settle(client, clock, plan.settle_poll_s, plan.settle_timeout_s)
            clock.sleep_s(plan.isi_s)
    except SessionAborted as exc:
        stats = compute_stats(records, plan.conditions) if records else None
        emit({"type": "session_end", "complete": False, "error": exc.cause,
              "stats": stats.to_dict() if stats else None})
        raise SessionAborted(records, exc.cause) from None
    except TransportError as exc:
        emit({"type": "session_end", "complete": False, "error": str(exc),
              "stats": None})
        raise SessionAborted(records, f"transport failure: {exc}") from None

    stats = compute_stats(records, plan.conditions)
    emit({"type": "session_end", "complete": True, "stats": stats.to_dict()})
    return records


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class SessionStats:
    conditions: tuple[str, ...]
    trials: int
    overall_accuracy: float
    per_condition_accuracy: dict[str, float]
    overall_mean_rt_s: float
    per_condition_mean_rt_s: dict[str, float]
    confusion: tuple[tuple[int, ...], ...]  # rows: presented, cols: responded
    no_response: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "conditions": list(self.conditions),
            "trials": self.trials,
            "overall_accuracy": self.overall_accuracy,
            "per_condition_accuracy": dict(self.per_condition_accuracy),
            "overall_mean_rt_s": self.overall_mean_rt_s,
            "per_condition_mean_rt_s": dict(self.per_condition_mean_rt_s),
            "confusion": [list(row) for row in self.confusion],
            "no_response": dict(self.no_response),
        }


def compute_stats(records: list[TrialRecord],
                  conditions: tuple[str, ...] | None = None) -> SessionStats:
    """Descriptive statistics over a set of trial records.

    Confusion rows and columns follow ``conditions`` order; responses
    outside that set (including timeouts) are tallied per presented
    condition in ``no_response`` so every row plus its no-response count
    equals that condition's trial count. Mean response times cover
    answered trials only.
    """
    if not records:
        raise ValueError("cannot compute statistics over zero records")
    if conditions is None:
        conditions = tuple(c for c in STIMULUS_CONDITIONS
                           if any(r.presented == c for r in records))
    index = {cond: i for i, cond in enumerate(conditions)}
    n = len(conditions)
    confusion = [[0] * n for _ in range(n)]
    no_response = {cond: 0 for cond in conditions}
    for rec in records:
        if rec.presented not in index:
            raise ValueError(f"record {rec.index} presents unknown condition "
                             f"{rec.presented!r}")
        row = index[rec.presented]
        if rec.responded in index:
            confusion[row][index[rec.responded]] += 1
        else:
            no_response[rec.presented] += 1

    def _acc(conds) -> float:
        subset = [r for r in records if r.presented in conds]
        return sum(r.correct for r in subset) / len(subset) if subset else 0.0

    def _mean_rt(conds) -> float:
        subset = [r.response_time_s for r in records
                  if r.presented in conds and r.responded is not None]
        return sum(subset) / len(subset) if subset else 0.0

    return SessionStats(
        conditions=tuple(conditions),
        trials=len(records),
        overall_accuracy=sum(r.correct for r in records) / len(records),
        per_condition_accuracy={c: _acc({c}) for c in conditions},
        overall_mean_rt_s=_mean_rt(set(conditions)),
        per_condition_mean_rt_s={c: _mean_rt({c}) for c in conditions},
        confusion=tuple(tuple(row) for row in confusion),
        no_response=no_response,
    )


def format_stats_table(stats: SessionStats) -> str:
    """Accuracy/RT table in the shape study reports use."""
    lines = [f"{'condition':<10}{'trials':>7}{'accuracy':>10}{'mean RT (s)':>13}"]
    counts = {c: sum(row) for c, row in zip(stats.conditions, stats.confusion)}
    for cond in stats.conditions:
        trials = counts[cond] + stats.no_response.get(cond, 0)
        acc = stats.per_condition_accuracy[cond]
        rt = stats.per_condition_mean_rt_s[cond]
        lines.append(f"{cond:<10}{trials:>7}{acc:>9.0%}{rt:>13.2f}")
    lines.append(f"{'overall':<10}{stats.trials:>7}{stats.overall_accuracy:>9.0%}"
                 f"{stats.overall_mean_rt_s:>13.2f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# log export / import

CSV_COLUMNS = ("index", "presented", "responded", "correct", "response_time_s",
               "t_command_ms", "t_settle_ms", "t_response_ms")

EXPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format", "version", "complete", "records", "stats"],
    "properties": {
        "format": {"const": "edgesim-session"},
        "version": {"const": 1},
        "complete": {"type": "boolean"},
        "label": {"type": "string"},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(CSV_COLUMNS),
                "properties": {
                    "index": {"type": "integer", "minimum": 0},
                    "presented": {"enum": list(STIMULUS_CONDITIONS)},
                    "responded": {"type": ["string", "null"]},
                    "correct": {"type": "boolean"},
                    "response_time_s": {"type": "number", "exclusiveMinimum": 0},
                    "t_command_ms": {"type": "number"},
                    "t_settle_ms": {"type": "number"},
                    "t_response_ms": {"type": "number"},
                },
            },
        },
        "stats": {
            "type": ["object", "null"],
            "required": ["conditions", "trials", "overall_accuracy", "confusion"],
        },
    },
}


def export_csv(records: list[TrialRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([
                rec.index,
                rec.presented,
                "" if rec.responded is None else rec.responded,
                "true" if rec.correct else "false",
                repr(rec.response_time_s),
                repr(rec.t_command_ms),
                repr(rec.t_settle_ms),
                repr(rec.t_response_ms),
            ])


def import_csv(path: str) -> list[TrialRecord]:
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CSV_COLUMNS):
            raise ValueError(f"{path}: line 1: expected header "
                             f"{','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ValueError(f"{path}: line {lineno}: expected "
                                 f"{len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                records.append(TrialRecord(
                    index=int(row[0]),
                    presented=row[1],
                    responded=row[2] or None,
                    correct=row[3] == "true",
                    response_time_s=float(row[4]),
                    t_command_ms=float(row[5]),
                    t_settle_ms=float(row[6]),
                    t_response_ms=float(row[7]),
                ))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return records


def export_structured(records: list[TrialRecord], stats: SessionStats | None,
                      path: str, complete: bool = True, label: str = "") -> None:
    doc = {
        "format": "edgesim-session",
        "version": 1,
        "complete": complete,
        "label": label,
        "records": [rec.to_dict() for rec in records],
        "stats": stats.to_dict() if stats is not None else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def import_structured(path: str) -> tuple[list[TrialRecord], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "edgesim-session":
        raise ValueError(f"{path}: not an edgesim session log")
    return [TrialRecord.from_dict(d) for d in doc["records"]], doc
