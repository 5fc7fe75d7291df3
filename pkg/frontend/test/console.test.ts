/**
 * Contract suite: the console is driven against recorded service fixtures
 * served by a mocked fetch. It must render exactly what the API says —
 * requested feature, per-step trace growth, the server-chosen (and
 * minimal) score row, terminal probability bars — and export the session
 * body byte for byte.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ConsoleApp, type ConsoleRoots } from "../src/app.js";
import { ApiClient } from "../src/api.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

function fixtureText(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

function fixture(name: string): unknown {
  return JSON.parse(fixtureText(name));
}

const OBSERVE_FIXTURES = [
  "observe_01.json",
  "observe_02.json",
  "observe_03.json",
  "observe_04.json",
  "observe_05.json",
  "observe_06.json",
  "observe_07.json",
];

class FixtureServer {
  observeCalls = 0;
  failAll = false;

  handle = async (input: RequestInfo | URL): Promise<Response> => {
    const url = String(input);
    if (this.failAll) {
      throw new TypeError("fetch failed");
    }
    const respond = (name: string) =>
      new Response(fixtureText(name), {
        status: 200,
        headers: { "content-type": "application/json" },
      });
    if (url.endsWith("/libraries")) return respond("libraries.json");
    if (url.endsWith("/sessions")) {
      return new Response(fixtureText("session_create.json"), { status: 201 });
    }
    if (url.includes("/observe")) {
      const name = OBSERVE_FIXTURES[this.observeCalls];
      this.observeCalls += 1;
      return respond(name);
    }
    if (url.includes("/sessions/")) return respond("session_terminated.json");
    throw new Error(`unexpected url: ${url}`);
  };
}

function buildDom(): ConsoleRoots {
  document.body.innerHTML = `
    <div id="error"></div>
    <section id="picker"></section>
    <section id="prompt"></section>
    <div id="scores"></div>
    <div id="trace"></div>
    <section id="prediction"></section>
    <button id="export"></button>
  `;
  return {
    picker: document.getElementById("picker")!,
    prompt: document.getElementById("prompt")!,
    scores: document.getElementById("scores")!,
    trace: document.getElementById("trace")!,
    prediction: document.getElementById("prediction")!,
    error: document.getElementById("error")!,
    exportButton: document.getElementById("export") as HTMLButtonElement,
  };
}

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

let server: FixtureServer;
let roots: ConsoleRoots;
let app: ConsoleApp;

beforeEach(async () => {
  server = new FixtureServer();
  vi.stubGlobal("fetch", server.handle);
  roots = buildDom();
  app = new ConsoleApp(new ApiClient("http://api.test"), roots);
  await app.start();
  await flush();
});

afterEach(() => {
  vi.unstubAllGlobals();
});

async function startSession(): Promise<void> {
  (document.getElementById("start-session") as HTMLButtonElement).click();
  await flush();
}

async function submitValue(text: string): Promise<void> {
  const input = document.getElementById("value-input") as HTMLInputElement;
  input.value = text;
  (document.getElementById("submit-value") as HTMLButtonElement).click();
  await flush();
}

async function runWholeSession(): Promise<void> {
  await startSession();
  for (let i = 0; i < OBSERVE_FIXTURES.length; i++) {
    await submitValue("0.5");
  }
}

describe("library picker", () => {
  it("is populated from the libraries endpoint", () => {
    const select = document.getElementById("library-select") as HTMLSelectElement;
    expect(select.options.length).toBe(1);
    expect(select.options[0].value).toBe("cube-demo");
    expect(select.options[0].textContent).toContain("3 templates");
  });
});

describe("session flow", () => {
  it("prompts for the initial feature by name after create", async () => {
    await startSession();
    const created = fixture("session_create.json") as {
      request: { name: string };
    };
    const label = document.getElementById("request-label")!;
    expect(label.textContent).toContain(created.request.name);
    expect(label.textContent).toContain("x7");
  });

  it("advances the trace by exactly one row per observation", async () => {
    await startSession();
    expect(document.querySelectorAll("tr.trace-row").length).toBe(0);
    await submitValue("0.25");
    expect(document.querySelectorAll("tr.trace-row").length).toBe(1);
    await submitValue("1.5");
    expect(document.querySelectorAll("tr.trace-row").length).toBe(2);
  });

  it("prompts for the feature the server asks for next", async () => {
    await startSession();
    await submitValue("0.25");
    const body = fixture("observe_01.json") as {
      acquire: { name: string };
    };
    expect(document.getElementById("request-label")!.textContent).toContain(
      body.acquire.name,
    );
  });

  it("blocks non-numeric input client-side", async () => {
    await startSession();
    await submitValue("not-a-number");
    expect(server.observeCalls).toBe(0);
    expect(document.getElementById("input-warning")!.textContent).not.toBe("");
    expect(document.querySelectorAll("tr.trace-row").length).toBe(0);
  });
});

describe("score table", () => {
  it("highlights the server-selected row and that row has the minimal total", async () => {
    await startSession();
    await submitValue("0.25");
    const rows = Array.from(document.querySelectorAll("#score-table tr[data-index]"));
    expect(rows.length).toBe(3);
    const totals = rows.map((tr) =>
      Number(tr.querySelector(".total-score")!.textContent),
    );
    const highlighted = rows.findIndex((tr) => tr.classList.contains("selected"));
    expect(highlighted).toBe(totals.indexOf(Math.min(...totals)));
    const body = fixture("observe_01.json") as { explanation: { selected: number } };
    expect(Number(rows[highlighted].getAttribute("data-index"))).toBe(
      body.explanation.selected,
    );
  });

  it("shows the loss and cost terms the server reported", async () => {
    await startSession();
    await submitValue("0.25");
    const body = fixture("observe_01.json") as {
      explanation: {
        templates: { estimated_loss: number; remaining_cost: number; total_score: number }[];
      };
    };
    const first = document.querySelector("#score-table tr[data-index='0']")!;
    expect(first.querySelector(".estimated-loss")!.textContent).toBe(
      String(body.explanation.templates[0].estimated_loss),
    );
    expect(first.querySelector(".remaining-cost")!.textContent).toBe(
      String(body.explanation.templates[0].remaining_cost),
    );
  });
});

describe("termination", () => {
  it("renders one probability bar per class, visually summing to one", async () => {
    await runWholeSession();
    const fills = Array.from(
      document.querySelectorAll<HTMLElement>("#prediction-bars .bar-fill"),
    );
    expect(fills.length).toBe(8);
    const widths = fills.map((f) => Number(f.style.width.replace("%", "")));
    const sum = widths.reduce((a, b) => a + b, 0);
    expect(Math.abs(sum - 100)).toBeLessThan(0.1);
    expect(document.getElementById("prediction-heading")!.textContent).toContain(
      "Prediction",
    );
    // input prompt is gone once terminated
    expect(document.getElementById("value-input")).toBeNull();
  });
});

describe("export", () => {
  it("equals the session endpoint body byte for byte and includes the prediction", async () => {
    await runWholeSession();
    const downloads: string[] = [];
    app.download = (text: string) => {
      downloads.push(text);
    };
    roots.exportButton.click();
    await flush();
    const expected = fixtureText("session_terminated.json");
    expect(downloads).toEqual([expected]);
    const parsed = JSON.parse(downloads[0]) as { prediction: number[]; status: string };
    expect(parsed.status).toBe("terminated");
    expect(parsed.prediction.length).toBe(8);
  });
});

describe("failure handling", () => {
  it("shows a retry banner when the service is unreachable, with no phantom session", async () => {
    server.failAll = true;
    roots = buildDom();
    app = new ConsoleApp(new ApiClient("http://api.test"), roots);
    await app.start();
    await flush();
    expect(document.getElementById("error-banner")).not.toBeNull();
    expect(document.getElementById("retry")).not.toBeNull();
    expect(document.getElementById("library-select")).toBeNull();
    // recovery: service comes back, retry repopulates the picker
    server.failAll = false;
    (document.getElementById("retry") as HTMLButtonElement).click();
    await flush();
    expect(document.getElementById("library-select")).not.toBeNull();
  });

  it("surfaces server errors verbatim without advancing the trace", async () => {
    await startSession();
    const original = server.handle;
    vi.stubGlobal("fetch", async (input: RequestInfo | URL) => {
      const url = String(input);
      if (url.includes("/observe")) {
        return new Response(
          JSON.stringify({ code: "unexpected_feature", message: "expected feature 7" }),
          { status: 409 },
        );
      }
      return original(input);
    });
    await submitValue("0.25");
    expect(document.getElementById("error-banner")!.textContent).toContain(
      "unexpected_feature",
    );
    expect(document.querySelectorAll("tr.trace-row").length).toBe(0);
  });
});
