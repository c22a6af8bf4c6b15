// Session setup: parse the operator's condition list, create the session,
// hand off to the judging screen.

import { ApiError, createSession } from "./api.js";
import type { CreateSessionRequest } from "./types.js";

export interface ParsedConditions {
  labels: string[];
  urls?: string[];
}

/**
 * One condition per line, either "label" or "label, url". Blank lines are
 * skipped. Throws on duplicates or a mix of with/without URLs.
 */
export function parseConditionLines(text: string): ParsedConditions {
  const labels: string[] = [];
  const urls: string[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line) continue;
    const comma = line.indexOf(",");
    if (comma < 0) {
      labels.push(line);
    } else {
      labels.push(line.slice(0, comma).trim());
      urls.push(line.slice(comma + 1).trim());
    }
  }
  if (labels.length < 2) {
    throw new Error("enter at least two conditions");
  }
  if (new Set(labels).size !== labels.length) {
    throw new Error("labels must be distinct");
  }
  if (urls.length > 0 && urls.length !== labels.length) {
    throw new Error("either give every condition a URL or none");
  }
  return urls.length > 0 ? { labels, urls } : { labels };
}

export function initSetupView(root: HTMLElement): void {
  root.innerHTML = `
    <h1>New session</h1>
    <p>One condition per line: <code>label</code> or <code>label, image-url</code>.</p>
    <textarea id="conditions" rows="8" placeholder="condition-a&#10;condition-b"></textarea>
    <label>Strategy
      <select id="kind">
        <option value="asap">gain-driven (full posterior)</option>
        <option value="asap_approx">gain-driven (online approximation)</option>
        <option value="random">random</option>
        <option value="swiss">swiss rounds</option>
        <option value="quicksort">quicksort</option>
        <option value="ts_sampling">matchmaking</option>
      </select>
    </label>
    <label>Seed <input id="seed" type="number" value="0"></label>
    <button id="start">Start session</button>
    <p id="setup-error" class="error" role="alert"></p>
  `;
  const errorBox = root.querySelector<HTMLElement>("#setup-error")!;
  const button = root.querySelector<HTMLButtonElement>("#start")!;
  button.addEventListener("click", async () => {
    errorBox.textContent = "";
    let body: CreateSessionRequest;
    try {
      const parsed = parseConditionLines(
        root.querySelector<HTMLTextAreaElement>("#conditions")!.value,
      );
      body = {
        ...parsed,
        sampler: {
          kind: root.querySelector<HTMLSelectElement>("#kind")!.value,
          seed: Number(root.querySelector<HTMLInputElement>("#seed")!.value),
        },
      };
    } catch (err) {
      errorBox.textContent = (err as Error).message;
      return;
    }
    button.disabled = true;
    try {
      const session = await createSession(body);
      window.location.hash = `#/judge/${session.session_id}`;
    } catch (err) {
      errorBox.textContent =
        err instanceof ApiError
          ? err.message
          : "server unreachable — check the service and try again";
    } finally {
      button.disabled = false;
    }
  });
}
