/**
 * Pure view-model builders. No fetches, no DOM: every function maps API
 * payloads (plus local draft state) to renderable structures, so the logic
 * is unit-testable and the displayed numbers stay verbatim API values.
 */

import type {
  ConflictPayload,
  ParcelDetail,
  PathStep,
  Prediction,
  ReportPayload,
} from "./api.js";

export const FEATURE_ORDER = [
  "crime_w",
  "drug_crime_w",
  "code_violation_w",
  "delinquent_tax",
  "delinquent_years",
  "unpaid_special_pct",
  "property_value",
] as const;

export type Orientation = "rows-are-parcels" | "columns-are-parcels";

export interface Table {
  headers: string[];
  rows: string[][];
}

/** Attribute table for a batch, in either orientation. The transposed form
 * mirrors the annotators' spreadsheet: each column is a parcel. */
export function batchTable(parcels: ParcelDetail[], orientation: Orientation): Table {
  const attrs = ["id", "kind", ...FEATURE_ORDER];
  const valueOf = (p: ParcelDetail, attr: string): string => {
    if (attr === "id") return p.parcel_id;
    if (attr === "kind") return p.kind;
    return String(p.features[attr]);
  };
  if (orientation === "rows-are-parcels") {
    return {
      headers: attrs,
      rows: parcels.map((p) => attrs.map((a) => valueOf(p, a))),
    };
  }
  return {
    headers: ["attribute", ...parcels.map((p) => p.parcel_id)],
    rows: attrs.map((a) => [a, ...parcels.map((p) => valueOf(p, a))]),
  };
}

export interface DraftEntry {
  label?: "VAD" | "NotVAD";
  comment: string;
  skipped: boolean;
}

export interface Progress {
  total: number;
  labeled: number;
  skipped: number;
  pending: number;
  complete: boolean;
  skippedIds: string[];
}

/** Submit is allowed only when every parcel is labeled or explicitly
 * skipped; skipped parcels are reported separately, never submitted. */
export function progress(assignment: string[], drafts: Record<string, DraftEntry>): Progress {
  let labeled = 0;
  const skippedIds: string[] = [];
  for (const pid of assignment) {
    const d = drafts[pid];
    if (d?.skipped) skippedIds.push(pid);
    else if (d?.label) labeled += 1;
  }
  const pending = assignment.length - labeled - skippedIds.length;
  return {
    total: assignment.length,
    labeled,
    skipped: skippedIds.length,
    pending,
    complete: pending === 0 && labeled > 0,
    skippedIds,
  };
}

export function submittableRecords(
  assignment: string[],
  drafts: Record<string, DraftEntry>,
): { parcel_id: string; value: "VAD" | "NotVAD"; comment: string }[] {
  const out = [];
  for (const pid of assignment) {
    const d = drafts[pid];
    if (d?.label && !d.skipped) {
      out.push({ parcel_id: pid, value: d.label, comment: d.comment ?? "" });
    }
  }
  return out;
}

export interface ConflictStepView {
  index: number;
  text: string;
}

/** Ordered, human-readable decision-path steps; one view entry per split in
 * the audit evidence (lengths always match). */
export function conflictSteps(steps: PathStep[]): ConflictStepView[] {
  return steps.map((s, i) => ({
    index: i + 1,
    text: `${s.feature} ${s.went_left ? "<=" : ">"} ${s.threshold}`,
  }));
}

export function conflictSummary(c: ConflictPayload): string {
  if (c.kind === "Isolation") {
    const n = c.evidence.path?.length ?? 0;
    return `${c.parcel_ids[0]} isolated behind ${n} splits (score ${c.isolation_score.toFixed(1)})`;
  }
  const d = c.evidence.distance ?? 0;
  return `${c.parcel_ids.join(" vs ")} disagree at distance ${d.toFixed(3)}`;
}

export interface DashboardCell {
  label: string;
  /** Verbatim payload value; null renders as NA. */
  raw: number | null;
  text: string;
}

export interface DashboardColumn {
  method: string;
  kind: string;
  cells: DashboardCell[];
}

const fmtPct = (v: number | null): string => (v === null ? "NA" : `${v.toFixed(2)}%`);
const fmtFrac = (v: number | null): string => (v === null ? "NA" : `${(100 * v).toFixed(2)}%`);

/** Comparison grid in the report's arrangement: one column per method/kind,
 * metric families as rows. Cell values are the payload's numbers untouched
 * (`raw`), formatted only for display. */
export function dashboardColumns(report: ReportPayload): DashboardColumn[] {
  return report.rows.map((row) => {
    const cells: DashboardCell[] = [
      { label: "Input", raw: row.input_count, text: String(row.input_count) },
      { label: "Output", raw: row.output_count, text: String(row.output_count) },
      { label: "Internal accuracy (CV)", raw: row.internal_cv, text: fmtFrac(row.internal_cv) },
      { label: "Internal accuracy (OOB)", raw: row.internal_oob, text: fmtFrac(row.internal_oob) },
    ];
    for (const src of report.validation_sources) {
      const v = row.consensus[src] ?? null;
      cells.push({ label: `Consensus vs ${src}`, raw: v, text: fmtPct(v) });
    }
    for (const feat of ["crime", "code_violation", "tax_delinquency", "low_property_value"]) {
      const v = row.sensitivity[feat] ?? null;
      cells.push({ label: `% with ${feat}`, raw: v, text: fmtPct(v) });
    }
    return { method: row.method, kind: row.kind, cells };
  });
}

export interface ScatterPoint {
  px: number;
  py: number;
  label: "VAD" | "NotVAD";
  parcel_id: string;
}

/** Map parcel coordinates into a width x height canvas, preserving aspect. */
export function scatterPoints(
  predictions: Prediction[],
  width: number,
  height: number,
  margin = 8,
): ScatterPoint[] {
  if (predictions.length === 0) return [];
  const xs = predictions.map((p) => p.x);
  const ys = predictions.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
  return predictions.map((p) => ({
    px: margin + (p.x - minX) * scale,
    py: height - margin - (p.y - minY) * scale,
    label: p.label,
    parcel_id: p.parcel_id,
  }));
}
