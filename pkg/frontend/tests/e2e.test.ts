// @vitest-environment jsdom
//
// Drives the care-flow example against a real server instance: four events,
// one boolean query, one wildcard query, one explanation. Every rendered
// value must equal the API payload bit for bit.
import { spawn, type ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnalystConsole } from "../src/app.js";
import type { BooleanAnswerWire, MatchesAnswerWire, StepResultWire } from "../src/types.js";

const PORT = 8761;
const BASE = `http://127.0.0.1:${PORT}`;
const repoRoot = join(dirname(fileURLToPath(import.meta.url)), "..", "..");

let server: ChildProcess;

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const r = await fetch(`${BASE}/sessions/none/state`);
      if (r.status === 404) return;
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("server did not come up");
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "procsift.cli", "serve", "--port", String(PORT), "--model-dir", join(repoRoot, "fixtures")],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("care-flow session end to end", () => {
  const api = new ApiClient(BASE);

  it("renders exactly what the API returns", async () => {
    const { id } = await api.createSession("care_restricted.json");

    document.body.innerHTML = "";
    const root = document.createElement("div");
    document.body.appendChild(root);
    const console_ = new AnalystConsole(root, api);
    await console_.connect(id);

    const steps: StepResultWire[] = [];
    for (const type of ["BloodSample", "BloodPressure", "Temperature", "CannulaInsertion"]) {
      steps.push(await console_.submitEvent(type));
    }
    expect(console_.view.entryCount()).toBe(4);

    // the final event is pinned to the surgery activity by the mapping
    expect(steps[3].ranking).toEqual([{ activity: "A2", probability: 1.0 }]);

    // every chip equals its payload value, bit for bit
    const entries = root.querySelectorAll<HTMLElement>(".entry");
    steps.forEach((step, i) => {
      const chips = entries[i].querySelectorAll<HTMLElement>(".chip");
      expect(chips.length).toBe(step.ranking.length);
      step.ranking.forEach((ranked, j) => {
        expect(chips[j].dataset.activity).toBe(ranked.activity);
        expect(chips[j].dataset.probability).toBe(ranked.probability.toString());
        expect(chips[j].textContent).toBe(`${ranked.activity} ${ranked.probability.toString()}`);
      });
    });

    // boolean query: YES
    const booleanPayload = (await api.query(id, {
      activity: "A2",
      step: "last",
      instance: 1,
    })) as BooleanAnswerWire;
    expect(booleanPayload.answer).toBe(true);
    const yesCard = await console_.runQuery({ activity: "A2", step: "last", instance: 1 });
    expect(yesCard.dataset.answer).toBe(String(booleanPayload.answer));
    expect(yesCard.querySelector(".verdict.yes")?.textContent).toBe("YES");

    // wildcard query on the unmapped activity: empty
    const wildcardPayload = (await api.query(id, { activity: "A1" })) as MatchesAnswerWire;
    expect(wildcardPayload.matches).toEqual([]);
    const emptyCard = await console_.runQuery({ activity: "A1" });
    expect(emptyCard.dataset.matches).toBe(String(wildcardPayload.matches.length));
    expect(emptyCard.querySelector(".verdict.empty")?.textContent).toBe(
      "no valid interpretations",
    );

    // explanation: mapping violation rendered verbatim
    const explainPayload = await api.explain(id, {
      activity: "A1",
      step: "first",
      instance: 1,
    });
    expect(explainPayload.reasons.map((r) => r.kind)).toEqual(["mapping_violation"]);
    const panel = await console_.requestExplanation({
      activity: "A1",
      step: "first",
      instance: 1,
    });
    const rendered = panel.querySelectorAll<HTMLElement>(".reason");
    expect(rendered.length).toBe(explainPayload.reasons.length);
    explainPayload.reasons.forEach((reason, i) => {
      expect(rendered[i].dataset.kind).toBe(reason.kind);
      expect(rendered[i].dataset.indices).toBe(reason.indices.join(","));
    });

    // query history is append-only: three cards in submission order
    expect(root.querySelectorAll(".answer-card").length).toBe(2);
    expect(root.querySelectorAll(".explanation-panel").length).toBe(1);

    console_.disconnect();
  }, 30_000);

  it("reconnecting renders prior state from the server", async () => {
    const { id } = await api.createSession("care_restricted.json");
    await api.postEvent(id, "BloodSample");
    await api.postEvent(id, "BloodPressure");

    document.body.innerHTML = "";
    const root = document.createElement("div");
    document.body.appendChild(root);
    const console_ = new AnalystConsole(root, api);
    await console_.connect(id);
    expect(console_.view.entryCount()).toBe(2);
    const labels = Array.from(root.querySelectorAll(".event-label")).map((e) => e.textContent);
    expect(labels).toEqual(["e1 BloodSample", "e2 BloodPressure"]);
    console_.disconnect();
  }, 30_000);

  it("live stream delivers steps posted by another client in order", async () => {
    const { id } = await api.createSession("care.json");

    document.body.innerHTML = "";
    const root = document.createElement("div");
    document.body.appendChild(root);
    const console_ = new AnalystConsole(root, api);
    await console_.connect(id);

    // a different client (bare API) drives the trace
    await api.postEvent(id, "BloodSample");
    await api.postEvent(id, "Temperature");
    for (let i = 0; i < 100 && console_.view.entryCount() < 2; i++) {
      await new Promise((resolve) => setTimeout(resolve, 100));
    }
    expect(console_.view.entryCount()).toBe(2);
    const indices = Array.from(root.querySelectorAll<HTMLElement>(".entry")).map(
      (e) => e.dataset.index,
    );
    expect(indices).toEqual(["1", "2"]);
    console_.disconnect();
  }, 30_000);
});
