/**
 * Round-trip against the real HTTP service: labels submitted through the
 * console's client show up in GET responses and in the exported sheet,
 * dashboard cells equal the /report payload field-for-field, and conflict
 * path rendering is step-for-step the audit evidence.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { conflictSteps, dashboardColumns } from "../src/model.js";

const PORT = 8937;
const BASE = `http://127.0.0.1:${PORT}`;

const BOOT = `
import sys
from pathlib import Path
import uvicorn
from vadtriage.synth import CityConfig, generate_city, write_city_csv
from vadtriage.session.api import create_app

workdir = Path(sys.argv[1])
ds, truth = generate_city(CityConfig(n_parcels=400, n_neighborhoods=4, seed=21))
write_city_csv(ds, truth, workdir / "city")
uvicorn.run(create_app(workdir / "sessions"), host="127.0.0.1", port=int(sys.argv[2]),
            log_level="warning")
`;

let server: ChildProcess;
let workdir: string;

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const resp = await fetch(`${BASE}/sessions`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("server did not come up");
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "vadtriage-ui-"));
  server = spawn("python3", ["-c", BOOT, workdir, String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(workdir, { recursive: true, force: true });
});

describe("console round-trip against the live service", () => {
  it("labels flow to GET responses and the exported sheet; dashboard and paths match payloads", async () => {
    // create a session the way an operator would (relaxed audit thresholds so
    // the engineered outlier below is flagged deterministically)
    const createResp = await fetch(`${BASE}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        dataset_ref: join(workdir, "city"),
        config: {
          seed: 21,
          forest: { n_trees: 10 },
          cv_at_retrain: false,
          audit: { min_depth: 1, max_leaf_allies: 2, min_opposite_mass: 3 },
        },
      }),
    });
    expect(createResp.ok).toBe(true);
    const sessionId = (await createResp.json()).session_id as string;

    const batchResp = await fetch(`${BASE}/sessions/${sessionId}/batches`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ n: 24, assignments: { ann1: 24 } }),
    });
    expect(batchResp.ok).toBe(true);
    const batch = await batchResp.json();
    const batchId = batch.batch.batch_id as string;
    const assigned = batch.assignments.ann1 as string[];

    // the console client: fetch parcel details, then label the highest-tax
    // parcel of each kind VAD and the rest NotVAD, so every kind has both
    // classes and the audit tree must isolate the outliers
    const api = new ApiClient(BASE, undefined, "ann1");
    const parcels = await Promise.all(assigned.map((pid) => api.getParcel(pid, sessionId)));
    const outliers = new Set<string>();
    for (const kind of ["Land", "Structure"]) {
      const ofKind = parcels.filter((p) => p.kind === kind);
      if (ofKind.length === 0) continue;
      let top = ofKind[0];
      for (const p of ofKind) {
        if (p.features.delinquent_tax > top.features.delinquent_tax) top = p;
      }
      outliers.add(top.parcel_id);
    }
    const records = parcels.map((p) => ({
      parcel_id: p.parcel_id,
      value: (outliers.has(p.parcel_id) ? "VAD" : "NotVAD") as "VAD" | "NotVAD",
      comment: outliers.has(p.parcel_id) ? 'huge arrears, "per lead", recheck' : "",
    }));
    const accepted = await api.submitLabels(batchId, records);
    expect(accepted.accepted).toBe(24);

    // 1. the labels appear in GET responses
    const session = await api.getSession(sessionId);
    expect(session.n_labels).toBe(24);
    const batchAfter = await api.getBatch(batchId);
    expect(["LABELED", "AUDITED"]).toContain(batchAfter.state);
    for (const pid of outliers) {
      const parcelAfter = await api.getParcel(pid, sessionId);
      expect(parcelAfter.effective_label).toBe("VAD");
    }

    // 2. and in the exported sheet, comment intact
    const sheetResp = await fetch(`${BASE}/sessions/${sessionId}/sheet?round=1`);
    const sheet = await sheetResp.text();
    const labelLine = sheet.split("\n").find((line) => line.startsWith("label,"));
    expect(labelLine).toBeDefined();
    expect(labelLine).toContain("VAD");
    expect(sheet).toContain('huge arrears, ""per lead"", recheck');

    // 3. conflict path rendering: one view step per audit evidence step
    const { conflicts } = await api.getConflicts(sessionId);
    const isolation = conflicts.find((c) => c.kind === "Isolation");
    expect(isolation).toBeDefined();
    const path = isolation?.evidence.path ?? [];
    expect(path.length).toBeGreaterThanOrEqual(1);
    expect(conflictSteps(path)).toHaveLength(path.length);

    // 4. dashboard cells equal the /report payload field-for-field
    await api.train(sessionId);
    const report = await api.getReport(sessionId);
    const columns = dashboardColumns(report);
    expect(columns).toHaveLength(report.rows.length);
    report.rows.forEach((row, i) => {
      const byLabel = Object.fromEntries(columns[i].cells.map((c) => [c.label, c.raw]));
      expect(byLabel["Input"]).toBe(row.input_count);
      expect(byLabel["Output"]).toBe(row.output_count);
      expect(byLabel["Internal accuracy (CV)"]).toBe(row.internal_cv);
      expect(byLabel["Internal accuracy (OOB)"]).toBe(row.internal_oob);
      for (const src of report.validation_sources) {
        expect(byLabel[`Consensus vs ${src}`]).toBe(row.consensus[src]);
      }
      for (const feat of Object.keys(row.sensitivity)) {
        expect(byLabel[`% with ${feat}`]).toBe(row.sensitivity[feat]);
      }
    });

    // 5. predictions power the scatter; labels are consistent with threshold
    const preds = await api.getPredictions(sessionId);
    expect(preds.predictions.length).toBeGreaterThan(0);
    for (const p of preds.predictions.slice(0, 50)) {
      expect(p.label === "VAD").toBe(p.proba >= preds.threshold);
    }
  }, 120_000);
});
