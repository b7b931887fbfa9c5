// Browser entry point: session bootstrap, stimulus rendering and
// pointer handling around the flow machine.

import { CollectApiError, HttpCollectApi } from "./api.js";
import { browserEnvironment, detectDevice } from "./device.js";
import { FlowMachine } from "./flow.js";
import { realScheduler } from "./scheduler.js";
import type { TaskView } from "./types.js";

const api = new HttpCollectApi(window.location.origin);

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

const stage = element<HTMLDivElement>("stage");
const stimulus = element<HTMLImageElement>("stimulus");
const caption = element<HTMLParagraphElement>("caption");
const status = element<HTMLParagraphElement>("status");
const marker = element<HTMLDivElement>("marker");

function pngUrl(bytes: ArrayBuffer): string {
  return URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
}

async function runTask(task: TaskView): Promise<void> {
  const imageUrl = pngUrl(await api.fetchImage(task.task_id));
  const target = await api.fetchTarget(task.task_id, task.mode);
  const targetUrl = target instanceof ArrayBuffer ? pngUrl(target) : null;
  status.textContent = `Task ${task.index + 1} of ${task.total}`;
  marker.hidden = true;

  await new Promise<void>((resolve) => {
    const machine = new FlowMachine(task, realScheduler, (phase) => {
      switch (phase) {
        case "image1":
          stimulus.src = imageUrl;
          caption.textContent = "Memorize the image";
          break;
        case "target":
          if (targetUrl !== null) {
            stimulus.src = targetUrl;
            caption.textContent = "This is the target object";
          } else {
            caption.textContent = `Target: ${(target as { description: string }).description}`;
          }
          break;
        case "image2_locked":
          stimulus.src = imageUrl;
          caption.textContent = "Get ready";
          break;
        case "click_enabled":
          stage.classList.add("enabled");
          caption.textContent = "Click the target object";
          break;
        default:
          break;
      }
    });

    const onClick = (event: MouseEvent) => {
      const attempt = machine.click(event.clientX, event.clientY, stimulus.getBoundingClientRect());
      if (!attempt.posted) {
        return; // locked phase or off the image: swallowed locally
      }
      stimulus.removeEventListener("click", onClick);
      stage.classList.remove("enabled");
      marker.style.left = `${event.clientX}px`;
      marker.style.top = `${event.clientY}px`;
      marker.hidden = false;

      const submit = async () => {
        for (;;) {
          try {
            await api.submitClick(task.task_id, {
              x: attempt.x,
              y: attempt.y,
              click_at_ms: attempt.clickAtMs,
            });
            return;
          } catch (error) {
            if (error instanceof CollectApiError) {
              throw error; // the service refused; retrying cannot help
            }
            status.textContent = "Network failure, retrying in 2 s";
            await new Promise((retry) => setTimeout(retry, 2000));
          }
        }
      };
      void submit().then(() => {
        URL.revokeObjectURL(imageUrl);
        if (targetUrl !== null) {
          URL.revokeObjectURL(targetUrl);
        }
        resolve();
      });
    };
    stimulus.addEventListener("click", onClick);
    machine.start();
  });
}

async function main(): Promise<void> {
  const device = detectDevice(browserEnvironment());
  const session = await api.openSession(device);
  status.textContent = `Session ${session.id} (${device})`;
  for (;;) {
    const next = await api.nextTask(session.id);
    if (next.done) {
      caption.textContent = "All done, thank you!";
      stimulus.removeAttribute("src");
      return;
    }
    const { done: _done, ...task } = next;
    await runTask(task);
  }
}

void main().catch((error) => {
  status.textContent = String(error);
});
