import { ApiClient } from "./api.js";
import { AnalystConsole } from "./app.js";
import type { QueryRequest } from "./types.js";

/** Browser bootstrap: session id from the URL, controls wired to the console. */

function param(name: string): string | null {
  return new URL(window.location.href).searchParams.get(name);
}

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found as T;
}

async function boot(): Promise<void> {
  const apiBase = param("api") ?? "";
  const api = new ApiClient(apiBase);
  const console_ = new AnalystConsole(el("session-view"), api);

  const status = el<HTMLElement>("status");
  const sessionInput = el<HTMLInputElement>("session-id");
  sessionInput.value = param("session") ?? "";

  const refreshButtons = () => {
    el<HTMLButtonElement>("send-event").disabled = !console_.connected || console_.busy;
    el<HTMLButtonElement>("run-query").disabled = !console_.connected;
    el<HTMLButtonElement>("run-explain").disabled = !console_.connected;
    el<HTMLButtonElement>("finalize").disabled = !console_.connected;
  };

  el<HTMLButtonElement>("connect").addEventListener("click", async () => {
    try {
      await console_.connect(sessionInput.value.trim());
      status.textContent = `connected to ${sessionInput.value.trim()}`;
    } catch (err) {
      status.textContent = `connect failed: ${String(err)}`;
    }
    refreshButtons();
  });

  el<HTMLButtonElement>("send-event").addEventListener("click", async () => {
    const type = el<HTMLInputElement>("event-type").value.trim();
    if (!type) return;
    refreshButtons();
    try {
      await console_.submitEvent(type);
      status.textContent = "";
    } catch (err) {
      status.textContent = String(err);
    }
    refreshButtons();
  });

  const queryFromForm = (): QueryRequest => {
    const request: QueryRequest = { activity: el<HTMLInputElement>("q-activity").value.trim() };
    const step = el<HTMLSelectElement>("q-step").value;
    if (step) request.step = step;
    const instance = el<HTMLInputElement>("q-instance").value.trim();
    if (instance) request.instance = Number(instance);
    if (el<HTMLInputElement>("q-skeptical").checked) request.semantics = "skeptical";
    const index = el<HTMLInputElement>("q-index").value.trim();
    if (index) request.event_index = Number(index);
    return request;
  };

  el<HTMLButtonElement>("run-query").addEventListener("click", async () => {
    try {
      await console_.runQuery(queryFromForm());
      status.textContent = "";
    } catch (err) {
      status.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("run-explain").addEventListener("click", async () => {
    try {
      await console_.requestExplanation(queryFromForm());
      status.textContent = "";
    } catch (err) {
      status.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("finalize").addEventListener("click", async () => {
    try {
      const summary = await console_.finalizeTrace();
      status.textContent = summary.inconsistent.length
        ? `finalized; inconsistent events: ${summary.inconsistent.join(", ")}`
        : "finalized; all streamed choices consistent";
    } catch (err) {
      status.textContent = String(err);
    }
  });

  refreshButtons();
}

boot();
