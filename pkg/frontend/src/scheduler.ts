// Monotonic time source plus one-shot timers, injectable for tests.
// Wall clocks can jump; every duration in the flow uses this instead.

export type Cancel = () => void;

export interface Scheduler {
  now(): number; // monotonic milliseconds
  after(ms: number, fn: () => void): Cancel;
}

export const realScheduler: Scheduler = {
  now: () => performance.now(),
  after: (ms, fn) => {
    const handle = setTimeout(fn, ms);
    return () => clearTimeout(handle);
  },
};

export function sleep(scheduler: Scheduler, ms: number): Promise<void> {
  return new Promise((resolve) => scheduler.after(ms, resolve));
}
