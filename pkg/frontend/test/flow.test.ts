import { describe, expect, it } from "vitest";

import { FlowMachine, type Phase } from "../src/flow.js";
import { naturalToCss, type DisplayRect } from "../src/coords.js";
import type { TaskView } from "../src/types.js";
import { ManualScheduler } from "./helpers.js";

const task: TaskView = {
  task_id: "t1",
  instance_id: "inst1",
  index: 0,
  total: 10,
  mode: "cutout",
  width: 40,
  height: 30,
  description: null,
  phases: { image_ms: 1500, target_ms: 2000, locked_ms: 1500 },
};

// The image displayed at 2x with an offset, as a layout would place it.
const rect: DisplayRect = { left: 12, top: 8, width: 80, height: 60 };

function machineWithLog() {
  const scheduler = new ManualScheduler();
  const log: Array<{ phase: Phase; at: number }> = [];
  const machine = new FlowMachine(task, scheduler, (phase, at) => log.push({ phase, at }));
  return { scheduler, log, machine };
}

describe("FlowMachine", () => {
  it("walks the phases strictly forward on the task's timings", () => {
    const { scheduler, log, machine } = machineWithLog();
    machine.start();
    expect(log).toEqual([{ phase: "image1", at: 0 }]);
    expect(machine.state.deadline).toBe(1500);

    scheduler.advance(1500);
    expect(log.at(-1)).toEqual({ phase: "target", at: 1500 });
    expect(machine.state.deadline).toBe(3500);

    scheduler.advance(2000);
    expect(log.at(-1)).toEqual({ phase: "image2_locked", at: 3500 });
    expect(machine.state.deadline).toBe(5000);

    scheduler.advance(1500);
    expect(log.at(-1)).toEqual({ phase: "click_enabled", at: 5000 });
    expect(machine.state.deadline).toBeNull();
    expect(log.map((e) => e.phase)).toEqual([
      "image1",
      "target",
      "image2_locked",
      "click_enabled",
    ]);
  });

  it("swallows clicks in every phase before click_enabled", () => {
    const { scheduler, machine } = machineWithLog();
    expect(machine.click(30, 30, rect)).toEqual({ posted: false, reason: "not-enabled" });
    machine.start();
    for (const wait of [0, 1500, 2000]) {
      scheduler.advance(wait);
      expect(machine.click(30, 30, rect)).toEqual({ posted: false, reason: "not-enabled" });
    }
    expect(machine.state.phase).toBe("image2_locked");
  });

  it("posts natural coordinates and the phase timeline once enabled", () => {
    const { scheduler, machine } = machineWithLog();
    machine.start();
    scheduler.advance(5000);
    scheduler.advance(120); // participant reaction time
    const css = naturalToCss(17, 9, rect, task.width, task.height);
    const attempt = machine.click(css.cssX, css.cssY, rect);
    expect(attempt).toEqual({ posted: true, x: 17, y: 9, clickAtMs: 5120 });
    expect(machine.state.phase).toBe("submitted");
  });

  it("keeps click_enabled after an off-image click", () => {
    const { scheduler, machine } = machineWithLog();
    machine.start();
    scheduler.advance(5000);
    expect(machine.click(rect.left - 1, 30, rect)).toEqual({
      posted: false,
      reason: "out-of-frame",
    });
    expect(machine.state.phase).toBe("click_enabled");
    const attempt = machine.click(rect.left + 1, rect.top + 1, rect);
    expect(attempt.posted).toBe(true);
  });

  it("accepts only one click per task", () => {
    const { scheduler, machine } = machineWithLog();
    machine.start();
    scheduler.advance(5000);
    expect(machine.click(30, 30, rect).posted).toBe(true);
    expect(machine.click(30, 30, rect)).toEqual({ posted: false, reason: "not-enabled" });
  });

  it("refuses to start twice", () => {
    const { machine } = machineWithLog();
    machine.start();
    expect(() => machine.start()).toThrow(/already started/);
  });

  it("dispose cancels the pending timer and freezes the phase", () => {
    const { scheduler, machine } = machineWithLog();
    machine.start();
    scheduler.advance(1500);
    expect(machine.state.phase).toBe("target");
    machine.dispose();
    expect(scheduler.pendingCount).toBe(0);
    scheduler.advance(10_000);
    expect(machine.state.phase).toBe("target");
  });
});
