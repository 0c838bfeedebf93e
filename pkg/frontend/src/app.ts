/**
 * Console wiring: connect to a session, label an assigned batch, review and
 * resolve conflicts, and watch the dashboard. The server is the single
 * source of truth; the app re-fetches after every state-changing action.
 */

import { ApiClient, ApiError } from "./api.js";
import type { BatchPayload, ConflictPayload, ParcelDetail, SessionInfo } from "./api.js";
import { DraftStore } from "./drafts.js";
import {
  batchTable,
  conflictSteps,
  conflictSummary,
  dashboardColumns,
  progress,
  scatterPoints,
  submittableRecords,
  type DraftEntry,
  type Orientation,
} from "./model.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

interface AppState {
  api: ApiClient;
  sessionId: string;
  session: SessionInfo | null;
  batch: BatchPayload | null;
  assignment: string[];
  parcels: ParcelDetail[];
  drafts: Record<string, DraftEntry>;
  draftStore: DraftStore | null;
  orientation: Orientation;
  rowErrors: Record<string, string>;
  busy: boolean;
}

const state: AppState = {
  api: new ApiClient(""),
  sessionId: "",
  session: null,
  batch: null,
  assignment: [],
  parcels: [],
  drafts: {},
  draftStore: null,
  orientation: "rows-are-parcels",
  rowErrors: {},
  busy: false,
};

function note(text: string, isError = false): void {
  const bar = $("status-bar");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.body.code}: ${err.body.message}`;
  return String(err);
}

// -- connect ----------------------------------------------------------------

async function connect(): Promise<void> {
  const base = ($("base-url") as HTMLInputElement).value.replace(/\/$/, "");
  const annotator = ($("annotator-id") as HTMLInputElement).value.trim();
  const sessionId = ($("session-id") as HTMLInputElement).value.trim();
  if (!annotator || !sessionId) {
    note("enter a session id and an annotator id", true);
    return;
  }
  state.api = new ApiClient(base, undefined, annotator);
  state.sessionId = sessionId;
  try {
    await refreshSession();
    note(`connected to ${sessionId} as ${annotator}`);
    await Promise.all([loadAssignment(), refreshConflicts(), refreshDashboard()]);
  } catch (err) {
    note(describeError(err), true);
  }
}

async function refreshSession(): Promise<void> {
  state.session = await state.api.getSession(state.sessionId);
  renderSessionSummary();
}

function renderSessionSummary(): void {
  const s = state.session;
  if (!s) return;
  const current = s.rounds[s.rounds.length - 1];
  $("session-summary").textContent = s
    ? `pool ${s.pool_size} | labels ${s.n_labels} | open conflicts ${s.open_conflicts}` +
      (current ? ` | round ${current.round} ${current.state}` : " | no rounds yet")
    : "";
}

// -- labeling ---------------------------------------------------------------

async function loadAssignment(): Promise<void> {
  const s = state.session;
  if (!s || s.rounds.length === 0) {
    $("batch-area").innerHTML = "<p class='empty'>No round is open.</p>";
    return;
  }
  const round = s.rounds[s.rounds.length - 1];
  const batch = await state.api.getBatch(round.batch_id);
  state.batch = batch;
  state.assignment = batch.assignments[state.api.annotatorId] ?? [];
  if (state.assignment.length === 0) {
    $("batch-area").innerHTML =
      `<p class='empty'>No parcels assigned to ${state.api.annotatorId} in round ${round.round}.</p>`;
    return;
  }
  state.draftStore = new DraftStore(window.localStorage, batch.batch.batch_id, state.api.annotatorId);
  state.drafts = state.draftStore.load();
  state.parcels = await Promise.all(
    state.assignment.map((pid) => state.api.getParcel(pid, state.sessionId)),
  );
  renderBatch();
}

function renderBatch(): void {
  const area = $("batch-area");
  area.innerHTML = "";
  const table = batchTable(state.parcels, state.orientation);
  const tableEl = document.createElement("table");
  tableEl.className = "batch";
  const head = tableEl.createTHead().insertRow();
  for (const h of table.headers) {
    const th = document.createElement("th");
    th.textContent = h;
    head.appendChild(th);
  }
  const body = tableEl.createTBody();
  for (const row of table.rows) {
    const tr = body.insertRow();
    for (const cell of row) {
      tr.insertCell().textContent = cell;
    }
  }
  area.appendChild(tableEl);

  const form = document.createElement("div");
  form.className = "label-form";
  for (const parcel of state.parcels) {
    const pid = parcel.parcel_id;
    const d: DraftEntry = state.drafts[pid] ?? { comment: "", skipped: false };
    const row = document.createElement("div");
    row.className = "label-row";
    row.dataset.parcel = pid;

    const name = document.createElement("span");
    name.className = "pid";
    name.textContent = pid;

    const select = document.createElement("select");
    for (const option of ["", "VAD", "NotVAD"]) {
      const el = document.createElement("option");
      el.value = option;
      el.textContent = option || "(choose)";
      select.appendChild(el);
    }
    select.value = d.label ?? "";
    select.addEventListener("change", () => {
      const label = select.value === "" ? undefined : (select.value as "VAD" | "NotVAD");
      updateDraft(pid, { label, skipped: false });
    });

    const comment = document.createElement("input");
    comment.type = "text";
    comment.placeholder = "comment";
    comment.value = d.comment;
    comment.addEventListener("input", () => updateDraft(pid, { comment: comment.value }));

    const skip = document.createElement("label");
    const skipBox = document.createElement("input");
    skipBox.type = "checkbox";
    skipBox.checked = d.skipped;
    skipBox.addEventListener("change", () => updateDraft(pid, { skipped: skipBox.checked }));
    skip.append(skipBox, document.createTextNode("skip"));

    const errorEl = document.createElement("span");
    errorEl.className = "row-error";
    errorEl.textContent = state.rowErrors[pid] ?? "";

    row.append(name, select, comment, skip, errorEl);
    form.appendChild(row);
  }
  area.appendChild(form);
  renderProgress();
}

function updateDraft(pid: string, entry: Partial<DraftEntry>): void {
  if (!state.draftStore) return;
  state.drafts = state.draftStore.update(pid, entry);
  renderProgress();
}

function renderProgress(): void {
  const p = progress(state.assignment, state.drafts);
  $("progress").textContent =
    `${p.labeled}/${p.total} labeled, ${p.skipped} skipped` +
    (p.skippedIds.length ? ` (${p.skippedIds.join(", ")})` : "");
  ($("submit-labels") as HTMLButtonElement).disabled = !p.complete || state.busy;
}

async function submitLabels(): Promise<void> {
  if (!state.batch || !state.draftStore) return;
  const records = submittableRecords(state.assignment, state.drafts);
  state.busy = true;
  renderProgress();
  state.rowErrors = {};
  try {
    const out = await state.api.submitLabels(state.batch.batch.batch_id, records);
    state.draftStore.clear();
    state.drafts = {};
    note(`accepted ${out.accepted} labels; round is ${out.round_state}`);
    await refreshSession();
    await Promise.all([loadAssignment(), refreshConflicts()]);
  } catch (err) {
    if (err instanceof ApiError) {
      // surface per-parcel errors inline on a best-effort match
      const match = /parcel (\S+)/.exec(err.body.message);
      if (match) state.rowErrors[match[1]] = err.body.code;
      note(describeError(err), true);
      renderBatch();
    } else {
      note(describeError(err), true);
    }
  } finally {
    state.busy = false;
    renderProgress();
  }
}

// -- conflicts ----------------------------------------------------------------

async function refreshConflicts(): Promise<void> {
  const area = $("conflict-area");
  area.innerHTML = "";
  let payload: { conflicts: ConflictPayload[] };
  try {
    payload = await state.api.getConflicts(state.sessionId);
  } catch (err) {
    area.textContent = describeError(err);
    return;
  }
  if (payload.conflicts.length === 0) {
    area.innerHTML = "<p class='empty'>No conflicts flagged.</p>";
    return;
  }
  for (const conflict of payload.conflicts) {
    area.appendChild(renderConflict(conflict));
  }
}

function renderConflict(conflict: ConflictPayload): HTMLElement {
  const card = document.createElement("div");
  card.className = `conflict ${conflict.status.toLowerCase()}`;
  const title = document.createElement("h4");
  title.textContent = `[${conflict.status}] ${conflict.kind}: ${conflictSummary(conflict)}`;
  card.appendChild(title);

  if (conflict.evidence.path) {
    const list = document.createElement("ol");
    list.className = "path-steps";
    for (const step of conflictSteps(conflict.evidence.path)) {
      const li = document.createElement("li");
      li.textContent = step.text;
      list.appendChild(li);
    }
    card.appendChild(list);
  }
  if (conflict.evidence.labels) {
    const p = document.createElement("p");
    p.textContent = Object.entries(conflict.evidence.labels)
      .map(([pid, v]) => `${pid}: ${v}`)
      .join(" | ");
    card.appendChild(p);
  }

  if (conflict.status === "Open") {
    const form = document.createElement("div");
    form.className = "resolve-form";
    const select = document.createElement("select");
    for (const option of ["VAD", "NotVAD"]) {
      const el = document.createElement("option");
      el.value = option;
      el.textContent = option;
      select.appendChild(el);
    }
    const rationale = document.createElement("input");
    rationale.type = "text";
    rationale.placeholder = "rationale (required)";
    const button = document.createElement("button");
    button.textContent = "Resolve";
    button.addEventListener("click", async () => {
      if (!rationale.value.trim()) {
        note("a resolution needs a rationale", true);
        return;
      }
      button.disabled = true;
      try {
        await state.api.resolveConflict(
          conflict.conflict_id, state.sessionId, select.value, rationale.value.trim());
        note(`resolved ${conflict.conflict_id}`);
        await refreshSession();
        await refreshConflicts();
      } catch (err) {
        note(describeError(err), true);
        button.disabled = false;
      }
    });
    form.append(select, rationale, button);
    card.appendChild(form);
  } else if (conflict.resolution) {
    const p = document.createElement("p");
    p.className = "resolution";
    p.textContent =
      `resolved ${conflict.resolution.final_label} by ${conflict.resolution.resolver_id}: ` +
      conflict.resolution.rationale;
    card.appendChild(p);
  }
  return card;
}

// -- dashboard ----------------------------------------------------------------

async function refreshDashboard(): Promise<void> {
  await refreshSession();
  const s = state.session;
  if (!s) return;
  const counts = $("dashboard-counts");
  counts.innerHTML = "";
  for (const snap of s.snapshots.slice(-1)) {
    for (const [kind, ks] of Object.entries(snap.kinds)) {
      const div = document.createElement("div");
      div.textContent =
        `${kind}: ${ks.n_rows} training rows (${ks.n_vad} VAD), ` +
        `OOB ${(100 * ks.oob).toFixed(2)}%` +
        (ks.cv_mean !== null ? `, CV ${(100 * ks.cv_mean).toFixed(2)}%` : "");
      counts.appendChild(div);
    }
  }

  const tableArea = $("dashboard-table");
  tableArea.innerHTML = "";
  try {
    const report = await state.api.getReport(state.sessionId);
    const columns = dashboardColumns(report);
    if (columns.length) {
      const tableEl = document.createElement("table");
      tableEl.className = "metrics";
      const head = tableEl.createTHead().insertRow();
      head.appendChild(document.createElement("th"));
      for (const col of columns) {
        const th = document.createElement("th");
        th.textContent = `${col.method}/${col.kind}`;
        head.appendChild(th);
      }
      const body = tableEl.createTBody();
      columns[0].cells.forEach((cell, i) => {
        const tr = body.insertRow();
        const th = document.createElement("th");
        th.textContent = cell.label;
        tr.appendChild(th);
        for (const col of columns) {
          tr.insertCell().textContent = col.cells[i].text;
        }
      });
      tableArea.appendChild(tableEl);
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      tableArea.innerHTML = "<p class='empty'>Not trained yet: request a batch, label it, then retrain.</p>";
    } else {
      tableArea.textContent = describeError(err);
    }
  }

  try {
    const preds = await state.api.getPredictions(state.sessionId);
    drawScatter(preds.predictions);
    $("scatter-caption").textContent =
      `${preds.predictions.length} pool parcels, threshold ${preds.threshold}`;
  } catch {
    $("scatter-caption").textContent = "predictions appear after the first retrain";
  }
}

function drawScatter(predictions: import("./api.js").Prediction[]): void {
  const canvas = $("scatter") as unknown as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (const point of scatterPoints(predictions, canvas.width, canvas.height)) {
    ctx.fillStyle = point.label === "VAD" ? "#c0392b" : "#2c3e50";
    ctx.globalAlpha = 0.6;
    ctx.fillRect(point.px - 1.5, point.py - 1.5, 3, 3);
  }
  ctx.globalAlpha = 1.0;
}

async function triggerRetrain(): Promise<void> {
  const button = $("retrain") as HTMLButtonElement;
  button.disabled = true;
  note("training...");
  try {
    const snap = await state.api.train(state.sessionId);
    note(`trained snapshot ${snap.snapshot_id} on ${snap.n_labels} labels`);
    await refreshDashboard();
  } catch (err) {
    note(describeError(err), true);
  } finally {
    button.disabled = false;
  }
}

// -- page setup ----------------------------------------------------------------

function switchTab(tab: string): void {
  for (const section of Array.from(document.querySelectorAll<HTMLElement>(".tab-panel"))) {
    section.hidden = section.id !== `tab-${tab}`;
  }
  for (const button of Array.from(document.querySelectorAll<HTMLButtonElement>(".tab-button"))) {
    button.classList.toggle("active", button.dataset.tab === tab);
  }
}

export function init(): void {
  $("connect").addEventListener("click", () => void connect());
  $("submit-labels").addEventListener("click", () => void submitLabels());
  $("retrain").addEventListener("click", () => void triggerRetrain());
  $("orientation").addEventListener("change", () => {
    state.orientation = ($("orientation") as HTMLSelectElement).value as Orientation;
    if (state.parcels.length) renderBatch();
  });
  $("refresh-conflicts").addEventListener("click", () => void refreshConflicts());
  $("refresh-dashboard").addEventListener("click", () => void refreshDashboard());
  for (const button of Array.from(document.querySelectorAll<HTMLButtonElement>(".tab-button"))) {
    button.addEventListener("click", () => switchTab(button.dataset.tab ?? "label"));
  }
  switchTab("label");
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", init);
}
