// Presentation flow state machine for one task.
//
// loading -> image1 -> target -> image2_locked -> click_enabled -> submitted
//
// Transitions are strictly forward and driven by monotonic timers with
// the phase durations the task arrived with. Clicks are accepted only
// in click_enabled; earlier clicks are swallowed locally and nothing
// reaches the network.

import { cssToNatural, type DisplayRect } from "./coords.js";
import type { Cancel, Scheduler } from "./scheduler.js";
import type { TaskView } from "./types.js";

export type Phase =
  | "loading"
  | "image1"
  | "target"
  | "image2_locked"
  | "click_enabled"
  | "submitted";

export const PHASE_ORDER: readonly Phase[] = [
  "loading",
  "image1",
  "target",
  "image2_locked",
  "click_enabled",
  "submitted",
];

export interface FlowState {
  phase: Phase;
  deadline: number | null; // scheduler time the current phase ends
  task: TaskView;
}

export type ClickAttempt =
  | { posted: true; x: number; y: number; clickAtMs: number }
  | { posted: false; reason: "not-enabled" | "out-of-frame" };

export type PhaseListener = (phase: Phase, at: number) => void;

export class FlowMachine {
  private phase: Phase = "loading";
  private deadline: number | null = null;
  private startedAt = 0; // scheduler time of the first image render
  private pending: Cancel | null = null;

  constructor(
    readonly task: TaskView,
    private readonly scheduler: Scheduler,
    private readonly onPhase?: PhaseListener,
  ) {}

  get state(): FlowState {
    return { phase: this.phase, deadline: this.deadline, task: this.task };
  }

  // Begin the presentation. The timer chain walks every phase; the
  // machine stops advancing at click_enabled and waits for click().
  start(): void {
    if (this.phase !== "loading") {
      throw new Error(`flow already started (phase ${this.phase})`);
    }
    this.startedAt = this.scheduler.now();
    const { image_ms, target_ms, locked_ms } = this.task.phases;
    this.advance("image1", image_ms, () =>
      this.advance("target", target_ms, () =>
        this.advance("image2_locked", locked_ms, () =>
          this.advance("click_enabled", null, null),
        ),
      ),
    );
  }

  // Click at a CSS position over the displayed image. Outside
  // click_enabled the attempt is swallowed; off-image positions keep
  // the phase so the participant can try again.
  click(cssX: number, cssY: number, rect: DisplayRect): ClickAttempt {
    if (this.phase !== "click_enabled") {
      return { posted: false, reason: "not-enabled" };
    }
    const point = cssToNatural(cssX, cssY, rect, this.task.width, this.task.height);
    if (point === null) {
      return { posted: false, reason: "out-of-frame" };
    }
    const clickAtMs = this.scheduler.now() - this.startedAt;
    this.advance("submitted", null, null);
    return { posted: true, x: point.x, y: point.y, clickAtMs };
  }

  // Cancel the pending timer when tearing the view down mid-flow.
  dispose(): void {
    this.pending?.();
    this.pending = null;
  }

  private advance(next: Phase, durationMs: number | null, then: (() => void) | null): void {
    const from = PHASE_ORDER.indexOf(this.phase);
    if (PHASE_ORDER.indexOf(next) !== from + 1) {
      throw new Error(`illegal transition ${this.phase} -> ${next}`);
    }
    this.pending = null;
    this.phase = next;
    const now = this.scheduler.now();
    this.deadline = durationMs === null ? null : now + durationMs;
    this.onPhase?.(next, now);
    if (durationMs !== null && then !== null) {
      this.pending = this.scheduler.after(durationMs, then);
    }
  }
}
