import type {
  ExplainAnswerWire,
  QueryAnswerWire,
  QueryRequest,
  StateWire,
  StepResultWire,
  SummaryWire,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** Thin JSON client; the console never recomputes anything it displays. */
export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let payload: unknown = null;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      throw new ApiError(response.status, `non-JSON response: ${text.slice(0, 120)}`);
    }
    if (!response.ok) {
      const message =
        payload && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  createSession(model: string | object, tagger?: string, config?: object): Promise<{ id: string }> {
    return this.call("POST", "/sessions", { model, tagger, config });
  }

  postEvent(sessionId: string, type: string, attrs?: Record<string, unknown>): Promise<StepResultWire> {
    return this.call("POST", `/sessions/${sessionId}/events`, { event: { type, attrs } });
  }

  query(sessionId: string, request: QueryRequest): Promise<QueryAnswerWire> {
    return this.call("POST", `/sessions/${sessionId}/query`, request);
  }

  explain(sessionId: string, request: QueryRequest): Promise<ExplainAnswerWire> {
    return this.call("POST", `/sessions/${sessionId}/explain`, request);
  }

  finalize(sessionId: string): Promise<SummaryWire> {
    return this.call("POST", `/sessions/${sessionId}/finalize`);
  }

  state(sessionId: string): Promise<StateWire> {
    return this.call("GET", `/sessions/${sessionId}/state`);
  }

  streamUrl(sessionId: string, replayOnly = false): string {
    return `${this.baseUrl}/sessions/${sessionId}/stream${replayOnly ? "?replay=1" : ""}`;
  }
}
