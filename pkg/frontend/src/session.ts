// Session view state machine. Pure reducer over bridge events so the
// trial phases, the response lockout, and the rendered numbers are
// testable without a DOM. The UI never computes statistics of its own:
// accuracy tallies come from engine-provided trial records, and the
// final summary renders the engine's session_end stats verbatim.

import type {
  BridgeEvent,
  DeviceStatePayload,
  SessionStatsPayload,
  TrialRecord,
} from "./types.js";

export type Phase =
  | "idle"
  | "calibrating"
  | "presenting"
  | "awaiting-response"
  | "isi"
  | "done";

export interface SessionView {
  connected: boolean;
  engineConnected: boolean;
  sessionActive: boolean;
  device: DeviceStatePayload | null;
  phase: Phase;
  trialIndex: number;
  totalTrials: number;
  conditions: string[];
  records: TrialRecord[];
  answered: number;
  correctCount: number;
  responseLocked: boolean;
  awaitingSince: number | null;
  lastFrame: number[] | null;
  frameTms: number;
  stats: SessionStatsPayload | null;
  complete: boolean | null;
  error: string | null;
  rejectionNotice: string | null;
  log: string[];
}

export function initialView(): SessionView {
  return {
    connected: false,
    engineConnected: false,
    sessionActive: false,
    device: null,
    phase: "idle",
    trialIndex: -1,
    totalTrials: 0,
    conditions: [],
    records: [],
    answered: 0,
    correctCount: 0,
    responseLocked: true,
    awaitingSince: null,
    lastFrame: null,
    frameTms: 0,
    stats: null,
    complete: null,
    error: null,
    rejectionNotice: null,
    log: [],
  };
}

const LOG_LIMIT = 200;

function withLog(view: SessionView, line: string): SessionView {
  const log = [...view.log, line];
  if (log.length > LOG_LIMIT) log.splice(0, log.length - LOG_LIMIT);
  return { ...view, log };
}

export function reduce(view: SessionView, event: BridgeEvent): SessionView {
  switch (event.type) {
    case "bridge_status":
      return {
        ...view,
        engineConnected: event.engine_connected,
        sessionActive: event.session_active,
        device: event.device,
      };
    case "calibrating":
      return withLog(
        { ...view, phase: "calibrating", responseLocked: true },
        `calibrating ${event.axis} axis`,
      );
    case "session_start":
      return withLog(
        {
          ...initialView(),
          connected: view.connected,
          engineConnected: view.engineConnected,
          device: view.device,
          sessionActive: true,
          phase: "presenting",
          totalTrials: event.total,
          conditions: event.conditions,
        },
        `session started: ${event.total} trials`,
      );
    case "trial_start":
      return withLog(
        {
          ...view,
          phase: "presenting",
          trialIndex: event.index,
          responseLocked: true,
          awaitingSince: null,
          rejectionNotice: null,
        },
        `trial ${event.index + 1}/${view.totalTrials}: presenting`,
      );
    case "await_response":
      // the one window where presses are accepted
      return withLog(
        {
          ...view,
          phase: "awaiting-response",
          trialIndex: event.index,
          responseLocked: false,
          awaitingSince: event.t0_ms,
        },
        `trial ${event.index + 1}: respond now`,
      );
    case "trial_end": {
      const record = event.record;
      return withLog(
        {
          ...view,
          phase: "isi",
          responseLocked: true,
          awaitingSince: null,
          records: [...view.records, record],
          answered: view.answered + 1,
          correctCount: view.correctCount + (record.correct ? 1 : 0),
        },
        `trial ${record.index + 1}: answered ${record.responded ?? "(none)"} ` +
          `in ${record.response_time_s.toFixed(2)} s`,
      );
    }
    case "session_end":
      return withLog(
        {
          ...view,
          phase: "done",
          responseLocked: true,
          sessionActive: false,
          stats: event.stats,
          complete: event.complete,
          error: event.error ?? null,
        },
        event.complete ? "session complete" : `session ended early: ${event.error}`,
      );
    case "frame":
      return { ...view, lastFrame: event.cells, frameTms: event.t_ms };
    case "response_rejected":
      return withLog(
        { ...view, rejectionNotice: event.reason },
        `press ignored: ${event.reason}`,
      );
    case "error":
      return withLog({ ...view, error: event.detail },
                     `${event.code}: ${event.detail}`);
    default:
      return view;
  }
}

// A press is forwarded to the engine only inside the response window and
// only once per trial; everything else is rejected locally.
export function canRespond(view: SessionView): boolean {
  return view.connected && view.phase === "awaiting-response" && !view.responseLocked;
}

export function lockResponse(view: SessionView): SessionView {
  return { ...view, responseLocked: true };
}

export function setConnected(view: SessionView, connected: boolean): SessionView {
  if (connected === view.connected) return view;
  const next = { ...view, connected };
  return withLog(next, connected ? "bridge connected" : "bridge connection lost");
}

export function runningAccuracy(view: SessionView): number | null {
  if (view.answered === 0) return null;
  return view.correctCount / view.answered;
}
