import { ApiClient } from "./api.js";
import { subscribe, type StreamHandle } from "./sse.js";
import { SessionView } from "./view.js";
import type { QueryRequest, StepResultWire, SummaryWire } from "./types.js";

/**
 * Controller for one live session: renders prior state on connect,
 * subscribes to the stream, and serializes event submission (one in-flight
 * event at a time, mirroring the server-side per-session ordering).
 */
export class AnalystConsole {
  readonly view: SessionView;
  private sessionId: string | null = null;
  private stream: StreamHandle | null = null;
  private eventTypes: string[] = [];
  private pending = false;

  constructor(root: HTMLElement, readonly api: ApiClient) {
    this.view = new SessionView(root);
  }

  get connected(): boolean {
    return this.sessionId !== null;
  }

  get busy(): boolean {
    return this.pending;
  }

  async connect(sessionId: string): Promise<void> {
    const state = await this.api.state(sessionId);
    this.sessionId = sessionId;
    const typesByIndex = new Map(state.prefix.map((e) => [e.index, e.type]));
    for (const step of state.results) {
      if (!this.view.hasEntry(step.index)) {
        this.view.addTimelineEntry(step, typesByIndex.get(step.index));
      }
    }
    this.eventTypes = state.prefix.map((e) => e.type);
    this.openStream();
  }

  private openStream(): void {
    if (!this.sessionId) return;
    this.stream?.close();
    this.stream = subscribe(
      this.api.streamUrl(this.sessionId),
      (message) => {
        if (message.event === "step") {
          const step = message.data as StepResultWire;
          if (!this.view.hasEntry(step.index)) {
            this.view.addTimelineEntry(step, this.eventTypes[step.index - 1]);
          }
        }
      },
      (status) => {
        if (status === "error") {
          this.view.setBanner("stream lost - reconnect to resume");
        } else if (status === "open") {
          this.view.setBanner(null);
        }
      },
    );
  }

  async submitEvent(type: string, attrs?: Record<string, unknown>): Promise<StepResultWire> {
    if (!this.sessionId) throw new Error("not connected");
    if (this.pending) throw new Error("an event is already in flight");
    this.pending = true;
    try {
      const step = await this.api.postEvent(this.sessionId, type, attrs);
      this.eventTypes[step.index - 1] = type;
      if (!this.view.hasEntry(step.index)) {
        this.view.addTimelineEntry(step, type);
      }
      return step;
    } finally {
      this.pending = false;
    }
  }

  /** Feed a recorded trace with a fixed delay between events. */
  async replay(types: string[], delayMs = 0): Promise<void> {
    for (const type of types) {
      await this.submitEvent(type);
      if (delayMs > 0) await new Promise((resolve) => setTimeout(resolve, delayMs));
    }
  }

  async runQuery(request: QueryRequest): Promise<HTMLElement> {
    if (!this.sessionId) throw new Error("not connected");
    const answer = await this.api.query(this.sessionId, request);
    return this.view.addAnswerCard(request, answer);
  }

  async requestExplanation(request: QueryRequest): Promise<HTMLElement> {
    if (!this.sessionId) throw new Error("not connected");
    const explanation = await this.api.explain(this.sessionId, request);
    return this.view.addExplanationPanel(request, explanation);
  }

  async finalizeTrace(): Promise<SummaryWire> {
    if (!this.sessionId) throw new Error("not connected");
    return this.api.finalize(this.sessionId);
  }

  disconnect(): void {
    this.stream?.close();
    this.stream = null;
    this.sessionId = null;
  }
}
