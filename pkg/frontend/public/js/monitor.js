// Live scale view: polls /scale and redraws a horizontal bar chart with
// +-1 standard deviation whiskers. All displayed numbers are API values
// verbatim; only the bar geometry is computed client-side.
import { ApiError, getScale } from "./api.js";
import { format, layoutBars } from "./scale.js";
export const DEFAULT_POLL_MS = 2000;
export function initMonitorView(root, sessionId, pollMs = DEFAULT_POLL_MS) {
    root.innerHTML = `
    <h1>Scale</h1>
    <p id="monitor-progress"></p>
    <div id="chart" class="chart"></div>
    <p id="monitor-error" class="error" role="alert"></p>
  `;
    const chart = root.querySelector("#chart");
    const progress = root.querySelector("#monitor-progress");
    const errorBox = root.querySelector("#monitor-error");
    let timer = null;
    let stopped = false;
    async function poll() {
        try {
            const scale = await getScale(sessionId);
            errorBox.textContent = "";
            progress.textContent =
                `${format(scale.trials)} trials, ` +
                    `${format(scale.standard_trials)} standard trials`;
            chart.innerHTML = layoutBars(scale.scores)
                .map((bar) => `
        <div class="row">
          <span class="row-label">#${bar.rank} ${bar.label}</span>
          <div class="track">
            <div class="whisker" style="left:${bar.whiskerLeft}%;width:${bar.whiskerWidth}%"></div>
            <div class="bar" style="left:${bar.barLeft}%;width:${bar.barWidth}%"></div>
          </div>
          <span class="row-value">${bar.meanText} &plusmn; ${bar.sdText}</span>
        </div>`)
                .join("");
        }
        catch (err) {
            if (err instanceof ApiError && err.status === 404) {
                chart.innerHTML = "";
                errorBox.textContent = "session not found";
                return; // stop polling a dead session
            }
            errorBox.textContent = "connection lost — retrying";
        }
        if (!stopped) {
            timer = setTimeout(() => void poll(), pollMs);
        }
    }
    void poll();
    return () => {
        stopped = true;
        if (timer !== null)
            clearTimeout(timer);
    };
}
