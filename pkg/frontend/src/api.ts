/**
 * Typed client for the acquisition service. The console performs no
 * policy computation of its own: every number it shows comes verbatim
 * from these payloads.
 */

export interface LibrarySummary {
  id: string;
  dataset: string;
  lambda: number;
  o_init: number;
  n_templates: number;
  templates: number[][];
  feature_names: string[];
  k: number;
}

export interface FeatureRequest {
  feature: number;
  name: string;
}

export interface TemplateScore {
  index: number;
  features: number[];
  feature_names: string[];
  estimated_loss: number;
  remaining_cost: number;
  total_score: number;
}

export interface Explanation {
  templates: TemplateScore[];
  selected: number;
}

export interface CreateSessionResponse {
  schema: string;
  session_id: string;
  library_id: string;
  status: string;
  request: FeatureRequest;
}

export interface TerminatePayload {
  prediction: number[];
  predicted_class: number;
  predicted_label: string | number;
}

export interface ObserveResponse {
  schema: string;
  session_id: string;
  status: string;
  explanation: Explanation;
  acquire?: FeatureRequest;
  terminate?: TerminatePayload;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiErrorBody;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = { code: "http_error", message: `HTTP ${response.status}` };
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listLibraries(): Promise<LibrarySummary[]> {
    const body = await parseOrThrow<{ libraries: LibrarySummary[] }>(
      await fetch(this.url("/libraries")),
    );
    return body.libraries;
  }

  async createSession(libraryId: string): Promise<CreateSessionResponse> {
    return parseOrThrow(
      await fetch(this.url("/sessions"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ library_id: libraryId }),
      }),
    );
  }

  async observe(
    sessionId: string,
    feature: number,
    value: number,
  ): Promise<ObserveResponse> {
    return parseOrThrow(
      await fetch(this.url(`/sessions/${sessionId}/observe`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ feature, value }),
      }),
    );
  }

  /** Raw body of GET /sessions/{id}; exported downloads must not re-serialise it. */
  async sessionRaw(sessionId: string): Promise<string> {
    const response = await fetch(this.url(`/sessions/${sessionId}`));
    if (!response.ok) {
      throw new ApiError(response.status, {
        code: "http_error",
        message: `HTTP ${response.status}`,
      });
    }
    return response.text();
  }
}
