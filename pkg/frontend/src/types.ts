// Payload shapes of the collection service HTTP API.

export type Device = "pc" | "mobile";

export interface SessionInfo {
  id: string;
  device: Device;
  total: number;
}

export interface PhaseTimings {
  image_ms: number;
  target_ms: number;
  locked_ms: number;
}

export interface TaskView {
  task_id: string;
  instance_id: string;
  index: number;
  total: number;
  mode: string;
  width: number;
  height: number;
  description: string | null;
  phases: PhaseTimings;
}

export type NextTask = { done: true; total: number } | ({ done: false } & TaskView);

export interface ClickSubmission {
  x: number;
  y: number;
  click_at_ms: number;
}

export type ClickReply =
  | { accepted: true; valid: boolean; batch_complete: boolean; batch_valid: boolean | null }
  | { accepted: false; reason: string; batch_complete: boolean; batch_valid: boolean | null };

export function totalPhaseMs(phases: PhaseTimings): number {
  return phases.image_ms + phases.target_ms + phases.locked_ms;
}
