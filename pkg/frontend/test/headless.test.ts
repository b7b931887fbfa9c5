import { describe, expect, it } from "vitest";

import type { CollectApi } from "../src/api.js";
import { naturalToCss } from "../src/coords.js";
import { runFlow, runSession, type AimPlan } from "../src/headless.js";
import { realScheduler } from "../src/scheduler.js";
import type { ClickReply, ClickSubmission, NextTask, TaskView } from "../src/types.js";

// Short real timings keep these tests honest about asynchrony while
// finishing in well under a second.
const PHASES = { image_ms: 10, target_ms: 15, locked_ms: 10 };

function makeTask(index: number): TaskView {
  return {
    task_id: `t${index}`,
    instance_id: `inst${index}`,
    index,
    total: 3,
    mode: "cutout",
    width: 40,
    height: 30,
    description: null,
    phases: PHASES,
  };
}

// In-memory stand-in for the service: three tasks, advanced by
// accepted submissions, optionally failing the first submit attempts.
class FakeApi implements CollectApi {
  tasks = [makeTask(0), makeTask(1), makeTask(2)];
  cursor = 0;
  imageFetches: string[] = [];
  targetFetches: Array<[string, string | undefined]> = [];
  submissions: Array<{ taskId: string; click: ClickSubmission }> = [];
  failNextSubmits = 0;

  openSession(device: "pc" | "mobile") {
    return Promise.resolve({ id: "s1", device, total: this.tasks.length });
  }

  nextTask(): Promise<NextTask> {
    const task = this.tasks[this.cursor];
    if (task === undefined) {
      return Promise.resolve({ done: true, total: this.tasks.length });
    }
    return Promise.resolve({ done: false, ...task });
  }

  fetchImage(taskId: string): Promise<ArrayBuffer> {
    this.imageFetches.push(taskId);
    return Promise.resolve(new ArrayBuffer(4));
  }

  fetchTarget(taskId: string, mode?: string): Promise<ArrayBuffer | { description: string }> {
    this.targetFetches.push([taskId, mode]);
    return Promise.resolve(new ArrayBuffer(4));
  }

  submitClick(taskId: string, click: ClickSubmission): Promise<ClickReply> {
    if (this.failNextSubmits > 0) {
      this.failNextSubmits--;
      return Promise.reject(new TypeError("fetch failed"));
    }
    this.submissions.push({ taskId, click });
    this.cursor++;
    return Promise.resolve({
      accepted: true,
      valid: true,
      batch_complete: this.cursor >= this.tasks.length,
      batch_valid: this.cursor >= this.tasks.length ? true : null,
    });
  }

  exportCsv(): Promise<string> {
    return Promise.resolve("");
  }
}

function aimAt(x: number, y: number, delayMs = 5): (task: TaskView) => AimPlan {
  return (task) => {
    const rect = { left: 0, top: 0, width: task.width, height: task.height };
    const css = naturalToCss(x, y, rect, task.width, task.height);
    return { cssX: css.cssX, cssY: css.cssY, rect, delayMs };
  };
}

describe("runFlow", () => {
  it("preloads stimuli, walks the phases and posts the click", async () => {
    const api = new FakeApi();
    const task = makeTask(0);
    const result = await runFlow(task, {
      api,
      scheduler: realScheduler,
      aim: aimAt(17, 9),
    });
    expect(api.imageFetches).toEqual(["t0"]);
    expect(api.targetFetches).toEqual([["t0", "cutout"]]);
    expect(result.phases.map((e) => e.phase)).toEqual([
      "image1",
      "target",
      "image2_locked",
      "click_enabled",
      "submitted",
    ]);
    expect(result.click.x).toBe(17);
    expect(result.click.y).toBe(9);
    // total presentation is 35 ms; the declared timeline cannot be shorter
    expect(result.click.click_at_ms).toBeGreaterThanOrEqual(35);
    expect(result.reply.accepted).toBe(true);
    expect(api.submissions[0]?.click).toEqual(result.click);
  });

  it("retries a failed submission without re-clicking", async () => {
    const api = new FakeApi();
    api.failNextSubmits = 2;
    const retries: number[] = [];
    const result = await runFlow(makeTask(0), {
      api,
      scheduler: realScheduler,
      aim: aimAt(5, 5),
      retryDelayMs: 5,
      onRetry: (_error, attempt) => retries.push(attempt),
    });
    expect(retries).toEqual([1, 2]);
    expect(api.submissions).toHaveLength(1);
    expect(api.submissions[0]?.click).toEqual(result.click);
  });

  it("gives up after maxRetries network failures", async () => {
    const api = new FakeApi();
    api.failNextSubmits = 10;
    await expect(
      runFlow(makeTask(0), {
        api,
        scheduler: realScheduler,
        aim: aimAt(5, 5),
        maxRetries: 2,
        retryDelayMs: 2,
      }),
    ).rejects.toThrow(/fetch failed/);
    expect(api.submissions).toHaveLength(0);
  });

  it("rejects a scripted aim that misses the image", async () => {
    const api = new FakeApi();
    await expect(
      runFlow(makeTask(0), {
        api,
        scheduler: realScheduler,
        aim: (task) => ({
          cssX: -5,
          cssY: -5,
          rect: { left: 0, top: 0, width: task.width, height: task.height },
          delayMs: 0,
        }),
      }),
    ).rejects.toThrow(/out-of-frame/);
  });
});

describe("runSession", () => {
  it("drains the whole batch in task order", async () => {
    const api = new FakeApi();
    const session = await runSession({
      api,
      device: "mobile",
      scheduler: realScheduler,
      aim: aimAt(1, 2),
    });
    expect(session.device).toBe("mobile");
    expect(session.results).toHaveLength(3);
    expect(api.submissions.map((s) => s.taskId)).toEqual(["t0", "t1", "t2"]);
    const last = session.results.at(-1);
    expect(last?.reply.batch_complete).toBe(true);
  });
});
