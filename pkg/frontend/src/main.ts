/** Page wiring: session list + create form, or the dashboard for
 * ?session=<id>. The dashboard subscribes to the event stream once and
 * re-renders from the folded view state; user actions are fire-and-confirm
 * against the API. */

import { ApiError, SessionApi, readEventStream } from "./api.js";
import type { CandidateRenders, DashboardHandlers } from "./dom.js";
import { renderDashboard, renderEditor } from "./dom.js";
import { applyRecord, applyRecords, emptyState, isTerminal } from "./state.js";
import type { SessionViewState } from "./state.js";
import type { TraceRecord } from "./types.js";

const api = new SessionApi(
  (window as { SKETCHVEC_API?: string }).SKETCHVEC_API ?? "http://127.0.0.1:8765",
);

function query(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

async function showSessionList(root: HTMLElement): Promise<void> {
  const sessions = await api.listSessions();
  root.replaceChildren();
  const heading = document.createElement("h2");
  heading.textContent = "sessions";
  root.appendChild(heading);

  const form = document.createElement("form");
  form.className = "create-form";
  form.innerHTML = `
    <label>sketch PNG <input type="file" name="sketch" accept="image/png" required></label>
    <label>config JSON <textarea name="config" rows="6">{
  "canvas": {"width": 200, "height": 200},
  "backend": "oracle",
  "oracle_target": {"shapes": []}
}</textarea></label>
    <button type="submit">create session</button>
    <div class="editor-error" data-role="error"></div>`;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const fileInput = form.querySelector<HTMLInputElement>("input[name=sketch]");
    const configInput = form.querySelector<HTMLTextAreaElement>("textarea[name=config]");
    const errorBox = form.querySelector<HTMLElement>("[data-role=error]");
    const file = fileInput?.files?.[0];
    if (!file || !configInput) {
      return;
    }
    void (async () => {
      try {
        const created = await api.createSession(file, JSON.parse(configInput.value));
        window.location.search = `?session=${created.id}`;
      } catch (error) {
        if (errorBox) {
          errorBox.textContent =
            error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
        }
      }
    })();
  });
  root.appendChild(form);

  const list = document.createElement("ul");
  list.className = "session-list";
  for (const session of sessions) {
    const item = document.createElement("li");
    const link = document.createElement("a");
    link.href = `?session=${session.id}`;
    link.textContent = `${session.id.slice(0, 8)} - ${session.phase} - ${session.step_count} step(s)`;
    item.appendChild(link);
    list.appendChild(item);
  }
  root.appendChild(list);
}

class Dashboard {
  state: SessionViewState;
  renders: CandidateRenders = {};
  connectionLost = false;
  editorError: string | null = null;
  private renderedRevision = -1;

  constructor(
    private readonly sessionId: string,
    private readonly dashboardRoot: HTMLElement,
    private readonly editorRoot: HTMLElement,
  ) {
    this.state = emptyState(sessionId);
  }

  async start(): Promise<void> {
    // The trace replays in full on the stream as well, but loading it first
    // paints the page before the subscription settles.
    applyRecords(this.state, await api.getTrace(this.sessionId));
    await this.fetchMissingRenders();
    this.paint();
    this.subscribe();
  }

  private subscribe(): void {
    const handle = readEventStream(
      api.eventsUrl(this.sessionId),
      (record) => this.onRecord(record),
      () => {
        this.connectionLost = true;
        this.paint(true);
        if (!isTerminal(this.state.phase)) {
          setTimeout(() => this.subscribe(), 1000);
        }
      },
    );
    void handle.done.then(() => {
      this.connectionLost = false;
    });
  }

  private onRecord(record: TraceRecord): void {
    if (!applyRecord(this.state, record)) {
      return;
    }
    this.connectionLost = false;
    if (record.type === "verdict" && record.step !== null) {
      void this.fetchStepRenders(record.step).then(() => this.paint(true));
    }
    this.paint();
  }

  private async fetchMissingRenders(): Promise<void> {
    await Promise.all(
      this.state.steps
        .filter((step) => step.verdict !== null && !this.renders[step.index])
        .map((step) => this.fetchStepRenders(step.index)),
    );
  }

  private async fetchStepRenders(index: number): Promise<void> {
    try {
      const detail = await api.getStep(this.sessionId, index);
      this.renders[index] = detail.candidates.map((c) => c.render_png_base64 ?? "");
    } catch {
      // Step view not available yet; the next verdict record retries.
    }
  }

  private handlers: DashboardHandlers = {
    onRunSteps: (steps) => {
      void api.run(this.sessionId, steps).catch((error) => this.showError(error));
    },
    onSelectCandidate: (step, index) => {
      void api
        .override(this.sessionId, { action: "select_candidate", step, index })
        .then(() => this.paint(true))
        .catch((error) => this.showError(error));
    },
    onAcceptFinal: () => {
      void api
        .override(this.sessionId, { action: "accept_as_final" })
        .catch((error) => this.showError(error));
    },
    onInjectInstruction: (text) => {
      void api
        .override(this.sessionId, { action: "inject_instruction", text })
        .catch((error) => this.showError(error));
    },
    onSubmitProgram: (json) => {
      let diagram: unknown;
      try {
        diagram = JSON.parse(json);
      } catch (error) {
        this.editorError = `not valid JSON: ${String(error)}`;
        this.paint(true);
        return;
      }
      void api
        .override(this.sessionId, {
          action: "edit_program",
          diagram: diagram as { shapes: [] },
        })
        .then(() => {
          this.editorError = null;
          this.paint(true);
        })
        .catch((error) => {
          // Server-side validation error, shown inline at the editor.
          this.editorError =
            error instanceof ApiError ? error.message : String(error);
          this.paint(true);
        });
    },
  };

  private showError(error: unknown): void {
    this.editorError = error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.paint(true);
  }

  paint(force = false): void {
    if (!force && this.state.revision === this.renderedRevision) {
      return;
    }
    this.renderedRevision = this.state.revision;
    renderDashboard(
      this.dashboardRoot,
      this.state,
      api.sketchUrl(this.sessionId),
      api.renderUrl(this.sessionId),
      this.renders,
      this.handlers,
      this.connectionLost,
    );
    renderEditor(
      this.editorRoot,
      JSON.stringify(this.state.currentDiagram, null, 2),
      this.editorError,
      this.handlers,
    );
  }
}

async function boot(): Promise<void> {
  const dashboardRoot = document.getElementById("dashboard");
  const editorRoot = document.getElementById("editor");
  if (!dashboardRoot || !editorRoot) {
    return;
  }
  const sessionId = query("session");
  if (sessionId === null) {
    await showSessionList(dashboardRoot);
    return;
  }
  const dashboard = new Dashboard(sessionId, dashboardRoot, editorRoot);
  await dashboard.start();
}

void boot();
