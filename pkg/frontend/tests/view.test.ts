// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { SessionView, describeQuery } from "../src/view.js";
import type { StepResultWire } from "../src/types.js";

let root: HTMLElement;
let view: SessionView;

beforeEach(() => {
  document.body.innerHTML = "";
  root = document.createElement("div");
  document.body.appendChild(root);
  view = new SessionView(root);
});

const step = (index: number, ranking: [string, number][], deviation = false): StepResultWire => ({
  v: 1,
  index,
  ranking: ranking.map(([activity, probability]) => ({ activity, probability })),
  deviation,
});

describe("timeline", () => {
  it("renders chips in payload order with verbatim probabilities", () => {
    view.addTimelineEntry(step(1, [["A2", 0.6640625], ["A1", 0.3359375]]), "BloodSample");
    const chips = root.querySelectorAll<HTMLElement>(".chip");
    expect(chips.length).toBe(2);
    expect(chips[0].dataset.activity).toBe("A2");
    expect(chips[0].dataset.probability).toBe("0.6640625");
    expect(chips[0].textContent).toBe("A2 0.6640625");
    expect(chips[1].dataset.activity).toBe("A1");
  });

  it("shows a deviation badge when the support is empty", () => {
    view.addTimelineEntry(step(3, [], true));
    const badge = root.querySelector(".badge.deviation");
    expect(badge?.textContent).toBe("no valid interpretation");
  });

  it("tracks entries by index", () => {
    view.addTimelineEntry(step(1, [["A1", 1]]));
    expect(view.hasEntry(1)).toBe(true);
    expect(view.hasEntry(2)).toBe(false);
    expect(view.entryCount()).toBe(1);
  });

  it("highlights entries named by a reason", () => {
    view.addTimelineEntry(step(1, [["A1", 1]]));
    view.addTimelineEntry(step(2, [["A1", 1]]));
    view.highlight([2]);
    const entries = root.querySelectorAll<HTMLElement>(".entry");
    expect(entries[0].classList.contains("highlight")).toBe(false);
    expect(entries[1].classList.contains("highlight")).toBe(true);
  });
});

describe("query history", () => {
  it("is append-only", () => {
    const first = view.addAnswerCard({ activity: "A2", step: "last", instance: 1 }, { v: 1, answer: true });
    view.addAnswerCard({ activity: "A1" }, { v: 1, matches: [] });
    const cards = root.querySelectorAll(".answer-card");
    expect(cards.length).toBe(2);
    expect(cards[0]).toBe(first);
    expect(cards[0].querySelector(".verdict.yes")?.textContent).toBe("YES");
    expect(cards[1].querySelector(".verdict.empty")?.textContent).toBe("no valid interpretations");
  });

  it("lists wildcard matches verbatim", () => {
    view.addAnswerCard(
      { activity: "A2" },
      {
        v: 1,
        matches: [
          { event_index: 4, activity: "A2", step: "last", instance: 1 },
          { event_index: 4, activity: "A2", step: "intermediate", instance: 1 },
        ],
      },
    );
    const items = root.querySelectorAll(".match");
    expect(items.length).toBe(2);
    expect(items[0].textContent).toBe("A2 last instance 1");
  });
});

describe("explanations", () => {
  it("renders reason kind, loci and constraint", () => {
    view.addExplanationPanel(
      { activity: "A1", step: "first", instance: 1 },
      {
        v: 1,
        reasons: [
          { kind: "mapping_violation", indices: [4], constraint: null, argument: null },
          { kind: "unmet_precedence", indices: [3], constraint: 0, argument: null },
        ],
      },
    );
    const reasons = root.querySelectorAll<HTMLElement>(".reason");
    expect(reasons[0].dataset.kind).toBe("mapping_violation");
    expect(reasons[0].textContent).toBe("mapping_violation at e4");
    expect(reasons[1].textContent).toBe("unmet_precedence at e3 (rule 0)");
  });

  it("clicking a reason highlights the linked event", () => {
    view.addTimelineEntry(step(1, [["A1", 1]]));
    const panel = view.addExplanationPanel(
      { activity: "A1", step: "first", instance: 1 },
      { v: 1, reasons: [{ kind: "not_started", indices: [1], constraint: null, argument: null }] },
    );
    panel.querySelector<HTMLElement>(".reason")!.click();
    expect(root.querySelector(".entry")!.classList.contains("highlight")).toBe(true);
  });
});

describe("query labels", () => {
  it("formats wildcards and semantics", () => {
    expect(describeQuery({ activity: "A2", step: "last", instance: 1 })).toBe("A2, last, 1");
    expect(describeQuery({ activity: "A1" })).toBe("A1, _, _");
    expect(
      describeQuery({ activity: "A1", semantics: "skeptical", event_index: 2 }),
    ).toBe("e2: A1, _, _ [skeptical]");
  });
});
