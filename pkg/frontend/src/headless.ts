// Scripted driver over the flow machine: fetch stimuli, walk the
// phases in real time, click, post. The browser shell and the headless
// e2e client both run tasks through this.

import type { CollectApi } from "./api.js";
import type { DisplayRect } from "./coords.js";
import { FlowMachine, type Phase } from "./flow.js";
import { sleep, type Scheduler } from "./scheduler.js";
import type { ClickReply, Device, TaskView } from "./types.js";

// Where and when to click once the flow enables input. CSS coordinates
// exercise the same conversion a pointer event goes through.
export interface AimPlan {
  cssX: number;
  cssY: number;
  rect: DisplayRect;
  delayMs: number; // wait after click_enabled before clicking
}

export interface PhaseEvent {
  phase: Phase;
  at: number; // scheduler time
}

export interface FlowOptions {
  api: CollectApi;
  scheduler: Scheduler;
  aim: (task: TaskView) => AimPlan;
  onPhase?: (event: PhaseEvent) => void;
  // Submission retry on network failure; the task is never advanced
  // past a click that the service has not acknowledged.
  maxRetries?: number;
  retryDelayMs?: number;
  onRetry?: (error: unknown, attempt: number) => void;
}

export interface FlowResult {
  task: TaskView;
  reply: ClickReply;
  click: { x: number; y: number; click_at_ms: number };
  phases: PhaseEvent[];
}

export async function runFlow(task: TaskView, options: FlowOptions): Promise<FlowResult> {
  const { api, scheduler, aim } = options;

  // Preload both stimuli so phase changes only swap what is shown.
  await api.fetchImage(task.task_id);
  await api.fetchTarget(task.task_id, task.mode);

  const phases: PhaseEvent[] = [];
  let enable: () => void;
  const enabled = new Promise<void>((resolve) => {
    enable = resolve;
  });
  const machine = new FlowMachine(task, scheduler, (phase, at) => {
    const event = { phase, at };
    phases.push(event);
    options.onPhase?.(event);
    if (phase === "click_enabled") {
      enable();
    }
  });

  machine.start();
  await enabled;

  const plan = aim(task);
  if (plan.delayMs > 0) {
    await sleep(scheduler, plan.delayMs);
  }
  const attempt = machine.click(plan.cssX, plan.cssY, plan.rect);
  if (!attempt.posted) {
    throw new Error(`scripted click was swallowed: ${attempt.reason}`);
  }

  const click = { x: attempt.x, y: attempt.y, click_at_ms: attempt.clickAtMs };
  const maxRetries = options.maxRetries ?? 3;
  const retryDelayMs = options.retryDelayMs ?? 250;
  for (let tries = 0; ; tries++) {
    try {
      const reply = await api.submitClick(task.task_id, click);
      return { task, reply, click, phases };
    } catch (error) {
      if (tries >= maxRetries) {
        throw error;
      }
      options.onRetry?.(error, tries + 1);
      await sleep(scheduler, retryDelayMs);
    }
  }
}

export interface SessionOptions extends FlowOptions {
  device: Device;
}

export interface SessionResult {
  sessionId: string;
  device: Device;
  results: FlowResult[];
}

// Open a session and run its whole batch to completion.
export async function runSession(options: SessionOptions): Promise<SessionResult> {
  const session = await options.api.openSession(options.device);
  const results: FlowResult[] = [];
  for (;;) {
    const next = await options.api.nextTask(session.id);
    if (next.done) {
      return { sessionId: session.id, device: session.device, results };
    }
    const { done: _done, ...task } = next;
    results.push(await runFlow(task, options));
  }
}
