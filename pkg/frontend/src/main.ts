import { ApiClient } from "./api.js";
import { VerdictOutbox } from "./retry.js";
import { ReviewState } from "./state.js";
import {
  renderGrid,
  renderHeatmap,
  renderKappaSummary,
  renderQueueItem,
  renderQueueStatus,
} from "./render.js";
import type { PatternDetail, Verdict } from "./types.js";

const api = new ApiClient("");
const outbox = new VerdictOutbox(api);
const state = new ReviewState();
let runId: string | null = null;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node;
}

async function refreshDashboards(): Promise<void> {
  if (!runId) {
    return;
  }
  try {
    const kappa = await api.kappaReport(runId);
    el("kappa-panel").innerHTML =
      renderKappaSummary(kappa) + renderGrid(kappa.grid, "Consistency (trust scores)");
  } catch {
    el("kappa-panel").innerHTML = "<p class=\"empty\">no kappa report yet</p>";
  }
  try {
    const anomalies = await api.anomaliesReport(runId);
    el("anomaly-panel").innerHTML = renderHeatmap(anomalies);
  } catch {
    el("anomaly-panel").innerHTML = "<p class=\"empty\">no anomaly report yet</p>";
  }
  try {
    const grid = await api.difficultyReport(runId);
    el("difficulty-panel").innerHTML = renderGrid(grid, "Difficulty prediction accuracy");
  } catch {
    el("difficulty-panel").innerHTML = "<p class=\"empty\">no difficulty report yet</p>";
  }
}

async function showCurrent(): Promise<void> {
  const item = state.current();
  el("queue-status").innerHTML = renderQueueStatus(state.remaining(), outbox.pending);
  if (!item || !runId) {
    el("pattern-panel").innerHTML = "<p class=\"empty\">review queue is empty</p>";
    return;
  }
  let detail: PatternDetail | null = null;
  try {
    detail = await api.patternDetail(item.id, runId);
  } catch {
    detail = null; // offline: show the pattern text without the evidence panel
  }
  el("pattern-panel").innerHTML = renderQueueItem(item, detail);
}

async function submit(verdict: Verdict): Promise<void> {
  if (!runId) {
    return;
  }
  const item = state.applyVerdict(verdict);
  if (!item) {
    return;
  }
  outbox.enqueue({ patternId: item.id, runId, verdict });
  await flushOutbox();
  await showCurrent();
}

async function flushOutbox(): Promise<void> {
  const accepted = await outbox.flush();
  for (const result of outbox.delivered.slice(-accepted)) {
    state.reconcile(result);
  }
  if (accepted > 0) {
    await refreshDashboards();
  }
  el("queue-status").innerHTML = renderQueueStatus(state.remaining(), outbox.pending);
}

async function loadRun(id: string): Promise<void> {
  runId = id;
  const pending = await api.pendingPatterns(id);
  state.load(pending);
  await showCurrent();
  await refreshDashboards();
}

async function boot(): Promise<void> {
  const runs = await api.listRuns();
  const select = el("run-select") as HTMLSelectElement;
  select.innerHTML = runs
    .map((r) => `<option value="${r.run_id}">${r.run_id}</option>`)
    .join("");
  select.addEventListener("change", () => void loadRun(select.value));
  if (runs.length > 0) {
    await loadRun(runs[0].run_id);
  }

  document.addEventListener("keydown", (event) => {
    if (event.key === "v" || event.key === "V") {
      void submit("valid");
    } else if (event.key === "i" || event.key === "I") {
      void submit("invalid");
    }
  });
  el("valid-btn").addEventListener("click", () => void submit("valid"));
  el("invalid-btn").addEventListener("click", () => void submit("invalid"));

  // retry loop for verdicts that failed while offline
  setInterval(() => void flushOutbox(), 3000);
}

void boot();
