// Message payloads shared with the bridge; field names mirror the wire
// protocol and the experiment event stream exactly.

export type Condition = "EL" | "EH" | "SL" | "SH";

export const CONDITIONS: Condition[] = ["EL", "EH", "SL", "SH"];

export interface TrialRecord {
  index: number;
  presented: string;
  responded: string | null;
  correct: boolean;
  response_time_s: number;
  t_command_ms: number;
  t_settle_ms: number;
  t_response_ms: number;
}

export interface SessionStatsPayload {
  conditions: string[];
  trials: number;
  overall_accuracy: number;
  per_condition_accuracy: Record<string, number>;
  overall_mean_rt_s: number;
  per_condition_mean_rt_s: Record<string, number>;
  confusion: number[][];
  no_response: Record<string, number>;
}

export interface DeviceStatePayload {
  surface_mm: number;
  edge_mm: number;
  moving: boolean;
  calibrated_surface: boolean;
  calibrated_edge: boolean;
}

export type BridgeEvent =
  | { type: "bridge_status"; engine_connected: boolean; session_active: boolean;
      device: DeviceStatePayload }
  | { type: "calibrating"; axis: string }
  | { type: "session_start"; total: number; conditions: string[]; label: string }
  | { type: "trial_start"; index: number }
  | { type: "await_response"; index: number; t0_ms: number }
  | { type: "trial_end"; record: TrialRecord }
  | { type: "session_end"; complete: boolean; stats: SessionStatsPayload | null;
      error?: string }
  | { type: "frame"; t_ms: number; cells: number[] }
  | { type: "response_rejected"; reason: string }
  | { type: "error"; code: string; detail: string };

export interface StartSessionRequest {
  type: "start_session";
  repetitions: number;
  isi_s?: number;
  seed?: number;
  label?: string;
  response_timeout_s?: number;
  conditions?: string[];
}
