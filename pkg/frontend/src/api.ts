/** Typed client for the session service, plus a server-sent-events reader
 * built on fetch streams so the same code runs in browsers and in Node
 * (the test harness drives the real service with it). */

import type {
  ApiErrorBody,
  OverrideAction,
  SessionListEntry,
  SessionSummary,
  StepViewDto,
  TraceRecord,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiErrorBody = { code: "unknown", message: response.statusText };
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, body.code, body.message);
  }
  return (await response.json()) as T;
}

export class SessionApi {
  constructor(public readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async createSession(
    sketchPng: Blob | Uint8Array,
    config: Record<string, unknown>,
  ): Promise<SessionSummary> {
    const form = new FormData();
    const blob =
      sketchPng instanceof Blob
        ? sketchPng
        : new Blob([sketchPng.buffer as ArrayBuffer], { type: "image/png" });
    form.append("sketch", blob, "sketch.png");
    form.append("config", JSON.stringify(config));
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      body: form,
    });
    return expectJson<SessionSummary>(response);
  }

  async listSessions(phase?: string): Promise<SessionListEntry[]> {
    const query = phase ? `?phase=${encodeURIComponent(phase)}` : "";
    const body = await expectJson<{ sessions: SessionListEntry[] }>(
      await fetch(this.url(`/sessions${query}`)),
    );
    return body.sessions;
  }

  async getSession(id: string): Promise<SessionSummary> {
    return expectJson<SessionSummary>(await fetch(this.url(`/sessions/${id}`)));
  }

  async getTrace(id: string): Promise<TraceRecord[]> {
    const body = await expectJson<{ records: TraceRecord[] }>(
      await fetch(this.url(`/sessions/${id}/trace`)),
    );
    return body.records;
  }

  async getStep(id: string, index: number): Promise<StepViewDto> {
    return expectJson<StepViewDto>(
      await fetch(this.url(`/sessions/${id}/steps/${index}`)),
    );
  }

  /** steps=1 runs synchronously; larger budgets return 202 and stream
   * progress on /events. */
  async run(id: string, steps: number): Promise<{ phase?: string; run_token?: string }> {
    const response = await fetch(this.url(`/sessions/${id}/run?steps=${steps}`), {
      method: "POST",
    });
    return expectJson(response);
  }

  async override(id: string, action: OverrideAction): Promise<SessionSummary> {
    const response = await fetch(this.url(`/sessions/${id}/override`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(action),
    });
    return expectJson<SessionSummary>(response);
  }

  async currentRenderPng(id: string): Promise<Uint8Array> {
    const response = await fetch(this.url(`/sessions/${id}/render.png`));
    if (!response.ok) {
      throw new ApiError(response.status, "render_failed", response.statusText);
    }
    return new Uint8Array(await response.arrayBuffer());
  }

  sketchUrl(id: string): string {
    return this.url(`/sessions/${id}/sketch.png`);
  }

  renderUrl(id: string): string {
    return this.url(`/sessions/${id}/render.png`);
  }

  exportUrl(id: string): string {
    return this.url(`/sessions/${id}/export.svg`);
  }

  eventsUrl(id: string): string {
    return this.url(`/sessions/${id}/events`);
  }
}

export interface EventStreamHandle {
  done: Promise<void>;
  close(): void;
}

/** Subscribe to a session's SSE stream. Each complete `data:` payload is
 * parsed as a TraceRecord and handed to onRecord; the promise resolves
 * when the stream ends (the service closes it after the final record). */
export function readEventStream(
  url: string,
  onRecord: (record: TraceRecord) => void,
  onError?: (error: unknown) => void,
): EventStreamHandle {
  const controller = new AbortController();
  const done = (async () => {
    const response = await fetch(url, {
      signal: controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!response.ok || response.body === null) {
      throw new ApiError(response.status, "stream_failed", response.statusText);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done: finished, value } = await reader.read();
      if (finished) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      let boundary: number;
      while ((boundary = buffer.indexOf("\n\n")) >= 0) {
        const chunk = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        for (const line of chunk.split("\n")) {
          if (line.startsWith("data: ")) {
            onRecord(JSON.parse(line.slice(6)) as TraceRecord);
          }
        }
      }
    }
  })().catch((error: unknown) => {
    if (controller.signal.aborted) {
      return; // closed on purpose
    }
    if (onError) {
      onError(error);
    } else {
      throw error;
    }
  });
  return { done, close: () => controller.abort() };
}
