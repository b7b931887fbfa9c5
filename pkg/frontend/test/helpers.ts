// Deterministic scheduler for unit tests: time only moves when the
// test advances it, and due timers fire synchronously in order.

import type { Cancel, Scheduler } from "../src/scheduler.js";

interface Timer {
  due: number;
  seq: number;
  fn: () => void;
  cancelled: boolean;
}

export class ManualScheduler implements Scheduler {
  private time = 0;
  private seq = 0;
  private timers: Timer[] = [];

  now(): number {
    return this.time;
  }

  after(ms: number, fn: () => void): Cancel {
    const timer: Timer = { due: this.time + ms, seq: this.seq++, fn, cancelled: false };
    this.timers.push(timer);
    return () => {
      timer.cancelled = true;
    };
  }

  advance(ms: number): void {
    const target = this.time + ms;
    for (;;) {
      const due = this.timers
        .filter((t) => !t.cancelled && t.due <= target)
        .sort((a, b) => a.due - b.due || a.seq - b.seq)[0];
      if (due === undefined) {
        break;
      }
      this.timers = this.timers.filter((t) => t !== due);
      this.time = due.due;
      due.fn();
    }
    this.time = target;
  }

  get pendingCount(): number {
    return this.timers.filter((t) => !t.cancelled).length;
  }
}
