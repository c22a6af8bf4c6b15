// Judging loop: show the served pair side by side, capture a click or a
// left/right arrow key, submit, fetch the next pair. A conflict (the pair
// was already answered, e.g. a retried submit) silently refetches.

import { ApiError, nextPair, submitOutcome } from "./api.js";
import type { Condition, ServedPair } from "./types.js";

export type Side = "first" | "second";

/** Keyboard mapping: left arrow picks the left card, right the right. */
export function keyToChoice(key: string): Side | null {
  if (key === "ArrowLeft") return "first";
  if (key === "ArrowRight") return "second";
  return null;
}

function card(condition: Condition, side: Side): string {
  const media = condition.url
    ? `<img src="${condition.url}" alt="${condition.label}">`
    : "";
  return `
    <button class="card" data-side="${side}" aria-label="choose ${condition.label}">
      ${media}
      <span class="card-label">${condition.label}</span>
    </button>`;
}

export function initJudgeView(root: HTMLElement, sessionId: string): void {
  root.innerHTML = `
    <h1>Which is better?</h1>
    <p class="hint">Click a card or use the left/right arrow keys.</p>
    <div id="pair" class="pair"></div>
    <p id="progress" aria-live="polite"></p>
    <p><a href="#/monitor/${sessionId}">monitor this session</a></p>
  `;
  const pairBox = root.querySelector<HTMLElement>("#pair")!;
  const progress = root.querySelector<HTMLElement>("#progress")!;
  let current: ServedPair | null = null;
  let busy = false;

  async function loadNext(): Promise<void> {
    const response = await nextPair(sessionId);
    if (response.status === "awaiting_outcomes") {
      // another tab holds the outstanding pair; poll until it resolves
      current = null;
      pairBox.innerHTML = `<p>waiting for an outstanding answer…</p>`;
      setTimeout(() => void loadNext(), 1000);
      return;
    }
    current = response;
    pairBox.innerHTML =
      card(response.first, "first") + card(response.second, "second");
    for (const button of pairBox.querySelectorAll<HTMLButtonElement>(".card")) {
      button.addEventListener("click", () =>
        void choose(button.dataset.side as Side),
      );
    }
  }

  async function choose(side: Side): Promise<void> {
    if (!current || busy) return;
    busy = true;
    try {
      const result = await submitOutcome(sessionId, current.pair_id, side);
      progress.textContent =
        `${result.trials} trials (${result.standard_trials} standard trials)`;
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 409)) {
        busy = false;
        throw err;
      }
      // already answered (duplicate submit): just move on
    }
    busy = false;
    await loadNext();
  }

  document.addEventListener("keydown", (event) => {
    const side = keyToChoice(event.key);
    if (side) {
      event.preventDefault();
      void choose(side);
    }
  });

  void loadNext();
}
