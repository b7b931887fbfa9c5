// HTTP client for the collection service.

import type {
  ClickReply,
  ClickSubmission,
  Device,
  NextTask,
  SessionInfo,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class CollectApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`collect service returned ${status}: ${detail}`);
    this.name = "CollectApiError";
  }
}

export interface CollectApi {
  openSession(device: Device): Promise<SessionInfo>;
  nextTask(sessionId: string): Promise<NextTask>;
  fetchImage(taskId: string): Promise<ArrayBuffer>;
  fetchTarget(taskId: string, mode?: string): Promise<ArrayBuffer | { description: string }>;
  submitClick(taskId: string, click: ClickSubmission): Promise<ClickReply>;
  exportCsv(): Promise<string>;
}

export class HttpCollectApi implements CollectApi {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body === "object" && "detail" in body) {
          detail = JSON.stringify(body.detail);
        }
      } catch {
        // keep the status text when the error body is not JSON
      }
      throw new CollectApiError(response.status, detail);
    }
    return response;
  }

  private async postJson(path: string, payload: unknown): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async openSession(device: Device): Promise<SessionInfo> {
    const response = await this.postJson("/session", { device });
    return (await response.json()) as SessionInfo;
  }

  async nextTask(sessionId: string): Promise<NextTask> {
    const response = await this.request(`/session/${sessionId}/task`);
    return (await response.json()) as NextTask;
  }

  async fetchImage(taskId: string): Promise<ArrayBuffer> {
    const response = await this.request(`/task/${taskId}/image`);
    return response.arrayBuffer();
  }

  async fetchTarget(
    taskId: string,
    mode?: string,
  ): Promise<ArrayBuffer | { description: string }> {
    const suffix = mode ? `?mode=${encodeURIComponent(mode)}` : "";
    const response = await this.request(`/task/${taskId}/target${suffix}`);
    const type = response.headers.get("content-type") ?? "";
    if (type.includes("application/json")) {
      return (await response.json()) as { description: string };
    }
    return response.arrayBuffer();
  }

  async submitClick(taskId: string, click: ClickSubmission): Promise<ClickReply> {
    const response = await this.postJson(`/task/${taskId}/click`, click);
    return (await response.json()) as ClickReply;
  }

  async exportCsv(): Promise<string> {
    const response = await this.request("/export.csv");
    return response.text();
  }
}
