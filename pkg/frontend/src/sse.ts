import type { StreamMessage } from "./types.js";

export interface StreamHandle {
  close(): void;
  done: Promise<void>;
}

/**
 * Server-sent-event reader over fetch streaming, so the same code runs in
 * the browser and under node-based tests (no EventSource dependency).
 */
export function subscribe(
  url: string,
  onMessage: (message: StreamMessage) => void,
  onStatus?: (status: "open" | "closed" | "error") => void,
): StreamHandle {
  const controller = new AbortController();

  const done = (async () => {
    try {
      const response = await fetch(url, {
        signal: controller.signal,
        headers: { accept: "text/event-stream" },
      });
      if (!response.ok || !response.body) {
        onStatus?.("error");
        return;
      }
      onStatus?.("open");
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done: finished, value } = await reader.read();
        if (finished) break;
        buffer += decoder.decode(value, { stream: true });
        let boundary = buffer.indexOf("\n\n");
        while (boundary >= 0) {
          const frame = buffer.slice(0, boundary);
          buffer = buffer.slice(boundary + 2);
          const message = parseFrame(frame);
          if (message) onMessage(message);
          boundary = buffer.indexOf("\n\n");
        }
      }
      onStatus?.("closed");
    } catch (err) {
      if (!controller.signal.aborted) onStatus?.("error");
    }
  })();

  return { close: () => controller.abort(), done };
}

function parseFrame(frame: string): StreamMessage | null {
  let event = "message";
  const dataLines: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith(":")) continue; // keepalive comment
    if (line.startsWith("event:")) event = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (!dataLines.length) return null;
  try {
    return { event, data: JSON.parse(dataLines.join("\n")) };
  } catch {
    return null;
  }
}
