import type {
  ExplainAnswerWire,
  QueryAnswerWire,
  QueryRequest,
  StepResultWire,
} from "./types.js";

/**
 * DOM rendering for one session view. Every displayed value is taken
 * verbatim from an API payload: probabilities are stringified with
 * Number.prototype.toString and also stored in data attributes, so tests
 * can compare them bit for bit against the wire values.
 */
export class SessionView {
  readonly timeline: HTMLElement;
  readonly history: HTMLElement;
  readonly explanations: HTMLElement;
  readonly banner: HTMLElement;

  constructor(readonly root: HTMLElement) {
    this.banner = child(root, "div", "banner");
    this.banner.hidden = true;
    this.timeline = child(root, "ol", "timeline");
    this.history = child(root, "ul", "history");
    this.explanations = child(root, "div", "explanations");
  }

  hasEntry(index: number): boolean {
    return !!this.timeline.querySelector(`li[data-index="${index}"]`);
  }

  entryCount(): number {
    return this.timeline.children.length;
  }

  addTimelineEntry(step: StepResultWire, eventType?: string): HTMLElement {
    const entry = document.createElement("li");
    entry.className = "entry";
    entry.dataset.index = String(step.index);
    const label = child(entry, "span", "event-label");
    label.textContent = eventType ? `e${step.index} ${eventType}` : `e${step.index}`;
    const chips = child(entry, "span", "chips");
    for (const ranked of step.ranking) {
      const chip = child(chips, "span", "chip");
      chip.dataset.activity = ranked.activity;
      chip.dataset.probability = ranked.probability.toString();
      chip.textContent = `${ranked.activity} ${ranked.probability.toString()}`;
    }
    if (step.deviation) {
      const badge = child(entry, "span", "badge deviation");
      badge.textContent = "no valid interpretation";
    }
    this.timeline.appendChild(entry);
    return entry;
  }

  /** Query history is append-only: cards are never edited or removed. */
  addAnswerCard(request: QueryRequest, answer: QueryAnswerWire): HTMLElement {
    const card = document.createElement("li");
    card.className = "answer-card";
    const heading = child(card, "span", "query-text");
    heading.textContent = describeQuery(request);
    if ("answer" in answer) {
      const verdict = child(card, "span", answer.answer ? "verdict yes" : "verdict no");
      verdict.textContent = answer.answer ? "YES" : "NO";
      card.dataset.answer = String(answer.answer);
    } else if (!answer.matches.length) {
      const none = child(card, "span", "verdict empty");
      none.textContent = "no valid interpretations";
      card.dataset.matches = "0";
    } else {
      card.dataset.matches = String(answer.matches.length);
      const list = child(card, "ul", "matches");
      for (const match of answer.matches) {
        const item = child(list, "li", "match");
        item.textContent = `${match.activity} ${match.step} instance ${match.instance}`;
      }
    }
    this.history.appendChild(card);
    return card;
  }

  addExplanationPanel(request: QueryRequest, explanation: ExplainAnswerWire): HTMLElement {
    const panel = document.createElement("div");
    panel.className = "explanation-panel";
    const heading = child(panel, "span", "query-text");
    heading.textContent = `why not ${describeQuery(request)}`;
    if (!explanation.reasons.length) {
      child(panel, "span", "verdict yes").textContent = "valid";
    }
    const list = child(panel, "ul", "reasons");
    for (const reason of explanation.reasons) {
      const item = child(list, "li", "reason");
      item.dataset.kind = reason.kind;
      item.dataset.indices = reason.indices.join(",");
      const where = reason.indices.length ? ` at e${reason.indices.join(", e")}` : "";
      const rule = reason.constraint === null ? "" : ` (rule ${reason.constraint})`;
      item.textContent = `${reason.kind}${where}${rule}`;
      item.addEventListener("click", () => this.highlight(reason.indices));
    }
    this.explanations.appendChild(panel);
    return panel;
  }

  /** Clicking a reason highlights the events it points at. */
  highlight(indices: number[]): void {
    for (const entry of Array.from(this.timeline.children)) {
      const el = entry as HTMLElement;
      el.classList.toggle(
        "highlight",
        indices.includes(Number(el.dataset.index)),
      );
    }
  }

  setBanner(text: string | null): void {
    if (text === null) {
      this.banner.hidden = true;
      this.banner.textContent = "";
    } else {
      this.banner.hidden = false;
      this.banner.textContent = text;
    }
  }
}

export function describeQuery(request: QueryRequest): string {
  const step = request.step ?? "_";
  const instance = request.instance ?? "_";
  const where = request.event_index !== undefined ? `e${request.event_index}: ` : "";
  const semantics = request.semantics === "skeptical" ? " [skeptical]" : "";
  return `${where}${request.activity}, ${step}, ${instance}${semantics}`;
}

function child(parent: HTMLElement, tag: string, className: string): HTMLElement {
  const el = document.createElement(tag);
  el.className = className;
  parent.appendChild(el);
  return el;
}
