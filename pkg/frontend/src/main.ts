// Hash router gluing the three views together:
//   #/            session setup
//   #/judge/ID    judging loop
//   #/monitor/ID  live scale

import { initJudgeView } from "./judge.js";
import { initMonitorView } from "./monitor.js";
import { initSetupView } from "./setup.js";

let teardown: (() => void) | null = null;

function route(): void {
  const root = document.getElementById("app");
  if (!root) return;
  if (teardown) {
    teardown();
    teardown = null;
  }
  const hash = window.location.hash;
  const judge = hash.match(/^#\/judge\/(.+)$/);
  const monitor = hash.match(/^#\/monitor\/(.+)$/);
  if (judge) {
    initJudgeView(root, judge[1]);
  } else if (monitor) {
    teardown = initMonitorView(root, monitor[1]);
  } else {
    initSetupView(root);
  }
}

window.addEventListener("hashchange", route);
route();
