/**
 * Console wiring: one active session per tab, every state change waits
 * for the server response (no optimistic updates).
 */

import { ApiClient, type ObserveResponse } from "./api.js";
import {
  renderErrorBanner,
  renderLibraryPicker,
  renderPredictionBars,
  renderRequestPrompt,
  renderScoreTable,
  renderTraceTable,
  type TraceRow,
} from "./views.js";

export interface ConsoleRoots {
  picker: HTMLElement;
  prompt: HTMLElement;
  scores: HTMLElement;
  trace: HTMLElement;
  prediction: HTMLElement;
  error: HTMLElement;
  exportButton: HTMLButtonElement;
}

export class ConsoleApp {
  private sessionId: string | null = null;
  private pending: { feature: number; name: string } | null = null;
  private rows: TraceRow[] = [];
  /** Raw GET /sessions/{id} body; downloads must pass it through untouched. */
  lastExport: string | null = null;

  constructor(
    private readonly client: ApiClient,
    private readonly roots: ConsoleRoots,
  ) {
    roots.exportButton.addEventListener("click", () => void this.exportTrace());
  }

  async start(): Promise<void> {
    try {
      const libraries = await this.client.listLibraries();
      renderLibraryPicker(this.roots.picker, libraries, (id) => void this.open(id));
      this.roots.error.innerHTML = "";
    } catch (err) {
      renderErrorBanner(
        this.roots.error,
        `service unreachable: ${(err as Error).message}`,
        () => void this.start(),
      );
    }
  }

  private async open(libraryId: string): Promise<void> {
    try {
      const created = await this.client.createSession(libraryId);
      this.sessionId = created.session_id;
      this.pending = created.request;
      this.rows = [];
      renderTraceTable(this.roots.trace, this.rows);
      this.roots.prediction.innerHTML = "";
      this.roots.scores.innerHTML = "";
      this.promptForPending();
      this.roots.error.innerHTML = "";
    } catch (err) {
      this.sessionId = null; // failed create leaves no phantom session
      renderErrorBanner(
        this.roots.error,
        `could not start session: ${(err as Error).message}`,
      );
    }
  }

  private promptForPending(): void {
    if (!this.pending) return;
    renderRequestPrompt(this.roots.prompt, this.pending, (value) =>
      void this.submit(value),
    );
  }

  private async submit(value: number): Promise<void> {
    if (!this.sessionId || !this.pending) return;
    const observed = this.pending;
    let body: ObserveResponse;
    try {
      body = await this.client.observe(this.sessionId, observed.feature, value);
    } catch (err) {
      renderErrorBanner(this.roots.error, (err as Error).message);
      return;
    }
    this.roots.error.innerHTML = "";
    this.rows.push({
      step: this.rows.length + 1,
      featureName: observed.name,
      value,
      selectedTemplate: body.explanation.selected,
    });
    renderTraceTable(this.roots.trace, this.rows);
    renderScoreTable(this.roots.scores, body.explanation);
    if (body.status === "terminated" && body.terminate) {
      this.pending = null;
      this.roots.prompt.innerHTML = "";
      renderPredictionBars(this.roots.prediction, body.terminate);
    } else if (body.acquire) {
      this.pending = body.acquire;
      this.promptForPending();
    }
  }

  async exportTrace(): Promise<void> {
    if (!this.sessionId) return;
    try {
      this.lastExport = await this.client.sessionRaw(this.sessionId);
      this.download(this.lastExport, `session-${this.sessionId}.json`);
    } catch (err) {
      renderErrorBanner(this.roots.error, (err as Error).message);
    }
  }

  // separated so tests can intercept the blob creation
  download(text: string, filename: string): void {
    const blob = new Blob([text], { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const a = document.createElement("a");
    a.href = url;
    a.download = filename;
    a.click();
    URL.revokeObjectURL(url);
  }
}

export function mount(document: Document, baseUrl: string): ConsoleApp {
  const roots: ConsoleRoots = {
    picker: document.getElementById("picker")!,
    prompt: document.getElementById("prompt")!,
    scores: document.getElementById("scores")!,
    trace: document.getElementById("trace")!,
    prediction: document.getElementById("prediction")!,
    error: document.getElementById("error")!,
    exportButton: document.getElementById("export") as HTMLButtonElement,
  };
  const app = new ConsoleApp(new ApiClient(baseUrl), roots);
  void app.start();
  return app;
}
