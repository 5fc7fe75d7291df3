/**
 * Rendering helpers. Everything here is a pure projection of API payloads
 * into DOM; no scores are recomputed client-side (the argmin highlight
 * uses the server's `selected` index).
 */

import type {
  Explanation,
  FeatureRequest,
  LibrarySummary,
  TerminatePayload,
} from "./api.js";

export interface TraceRow {
  step: number;
  featureName: string;
  value: number;
  selectedTemplate: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderLibraryPicker(
  root: HTMLElement,
  libraries: LibrarySummary[],
  onStart: (libraryId: string) => void,
): void {
  root.innerHTML = "";
  const select = el("select", "library-picker");
  select.id = "library-select";
  for (const lib of libraries) {
    const option = el("option");
    option.value = lib.id;
    option.textContent = `${lib.id} (${lib.dataset}, ${lib.n_templates} templates, lambda=${lib.lambda})`;
    select.appendChild(option);
  }
  const button = el("button", "start-session", "Start session");
  button.id = "start-session";
  button.addEventListener("click", () => {
    if (select.value) onStart(select.value);
  });
  root.appendChild(select);
  root.appendChild(button);
}

export function renderRequestPrompt(
  root: HTMLElement,
  request: FeatureRequest,
  onSubmit: (value: number) => void,
): void {
  root.innerHTML = "";
  const label = el("label", "request-label", `Enter value for ${request.name}`);
  label.id = "request-label";
  const input = el("input", "value-input");
  input.id = "value-input";
  input.type = "text";
  const button = el("button", "submit-value", "Submit");
  button.id = "submit-value";
  const warning = el("span", "input-warning");
  warning.id = "input-warning";
  const submit = () => {
    const value = Number(input.value.trim());
    if (input.value.trim() === "" || Number.isNaN(value)) {
      warning.textContent = "enter a number";
      return; // non-numeric input never reaches the server
    }
    warning.textContent = "";
    onSubmit(value);
  };
  button.addEventListener("click", submit);
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") submit();
  });
  root.appendChild(label);
  root.appendChild(input);
  root.appendChild(button);
  root.appendChild(warning);
}

export function renderScoreTable(root: HTMLElement, explanation: Explanation): void {
  root.innerHTML = "";
  const table = el("table", "score-table");
  table.id = "score-table";
  const head = el("tr");
  for (const text of ["template", "features", "estimated loss", "remaining cost", "total"]) {
    head.appendChild(el("th", undefined, text));
  }
  table.appendChild(head);
  for (const row of explanation.templates) {
    const tr = el("tr", row.index === explanation.selected ? "selected" : "");
    tr.dataset.index = String(row.index);
    tr.appendChild(el("td", undefined, String(row.index)));
    tr.appendChild(el("td", undefined, row.feature_names.join(", ")));
    tr.appendChild(el("td", "estimated-loss", row.estimated_loss.toString()));
    tr.appendChild(el("td", "remaining-cost", row.remaining_cost.toString()));
    tr.appendChild(el("td", "total-score", row.total_score.toString()));
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderTraceTable(root: HTMLElement, rows: TraceRow[]): void {
  root.innerHTML = "";
  const table = el("table", "trace-table");
  table.id = "trace-table";
  const head = el("tr");
  for (const text of ["step", "feature", "entered value", "selected template"]) {
    head.appendChild(el("th", undefined, text));
  }
  table.appendChild(head);
  for (const row of rows) {
    const tr = el("tr", "trace-row");
    tr.appendChild(el("td", undefined, String(row.step)));
    tr.appendChild(el("td", undefined, row.featureName));
    tr.appendChild(el("td", undefined, String(row.value)));
    tr.appendChild(el("td", undefined, String(row.selectedTemplate)));
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderPredictionBars(
  root: HTMLElement,
  terminate: TerminatePayload,
): void {
  root.innerHTML = "";
  const heading = el(
    "div",
    "prediction-heading",
    `Prediction: class ${terminate.predicted_label}`,
  );
  heading.id = "prediction-heading";
  root.appendChild(heading);
  const bars = el("div", "prediction-bars");
  bars.id = "prediction-bars";
  terminate.prediction.forEach((p, cls) => {
    const row = el("div", "bar-row");
    row.appendChild(el("span", "bar-label", String(cls)));
    const track = el("div", "bar-track");
    const fill = el("div", "bar-fill");
    fill.style.width = `${(p * 100).toFixed(2)}%`;
    track.appendChild(fill);
    row.appendChild(track);
    row.appendChild(el("span", "bar-value", `${(p * 100).toFixed(1)}%`));
    bars.appendChild(row);
  });
  root.appendChild(bars);
}

export function renderErrorBanner(
  root: HTMLElement,
  message: string,
  onRetry?: () => void,
): void {
  root.innerHTML = "";
  const banner = el("div", "error-banner", message);
  banner.id = "error-banner";
  if (onRetry) {
    const retry = el("button", "retry", "Retry");
    retry.id = "retry";
    retry.addEventListener("click", onRetry);
    banner.appendChild(retry);
  }
  root.appendChild(banner);
}
