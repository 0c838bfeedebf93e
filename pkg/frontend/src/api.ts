/**
 * Typed client for the session HTTP API. The console never computes model
 * numbers itself; everything rendered comes from these payloads.
 */

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(body.message);
  }
}

export interface RoundInfo {
  round: number;
  state: string;
  batch_id: string;
  batch_size: number;
  assignments: Record<string, number>;
  warnings: string[];
}

export interface KindSnapshot {
  n_rows: number;
  n_vad: number;
  cv_mean: number | null;
  oob: number;
  forest_hash: string;
}

export interface SnapshotInfo {
  snapshot_id: string;
  round: number;
  n_labels: number;
  kinds: Record<string, KindSnapshot>;
}

export interface SessionInfo {
  session_id: string;
  dataset_ref: string;
  closed: boolean;
  pool_size: number;
  n_labels: number;
  n_effective_labels: number;
  open_conflicts: number;
  rounds: RoundInfo[];
  snapshots: SnapshotInfo[];
  validations: string[];
}

export interface BatchPayload {
  session_id: string;
  round: number;
  state: string;
  batch: {
    batch_id: string;
    round: number;
    parcel_ids: string[];
    strategy_tags: Record<string, string>;
    created_from_model: string | null;
  };
  assignments: Record<string, string[]>;
  warnings: string[];
}

export interface PathStep {
  feature: string;
  threshold: number;
  went_left: boolean;
}

export interface ConflictPayload {
  conflict_id: string;
  kind: "Isolation" | "Disagreement";
  parcel_ids: string[];
  evidence: {
    path?: PathStep[];
    distance?: number;
    labels?: Record<string, string>;
    leaf?: { vad: number; total: number };
    label?: string;
  };
  isolation_score: number;
  status: "Open" | "Resolved";
  resolution: {
    final_label: string;
    rationale: string;
    resolver_id: string;
    timestamp: string;
  } | null;
}

export interface ReportRow {
  method: string;
  kind: string;
  input_count: number;
  output_count: number;
  internal_cv: number | null;
  internal_oob: number | null;
  consensus: Record<string, number | null>;
  sensitivity: Record<string, number | null>;
}

export interface ReportPayload {
  validation_sources: string[];
  rows: ReportRow[];
}

export interface Prediction {
  parcel_id: string;
  kind: string;
  proba: number;
  label: "VAD" | "NotVAD";
  x: number;
  y: number;
}

export interface ParcelDetail {
  parcel_id: string;
  kind: string;
  neighborhood_id: string;
  x: number;
  y: number;
  flood_risk: string;
  residential_class: string;
  features: Record<string, number>;
  incident_summary: Record<string, number>;
  decision_path: { steps: PathStep[]; leaf: { vad: number; total: number } } | null;
  effective_label: string | null;
}

export interface LabelSubmission {
  parcel_id: string;
  value: "VAD" | "NotVAD";
  comment: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
    public annotatorId: string = "",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.annotatorId) headers["X-Annotator-Id"] = this.annotatorId;
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let parsed: ApiErrorBody;
      try {
        parsed = (await resp.json()) as ApiErrorBody;
      } catch {
        parsed = { code: "http_error", message: `HTTP ${resp.status}`, detail: "" };
      }
      throw new ApiError(resp.status, parsed);
    }
    return (await resp.json()) as T;
  }

  listSessions(): Promise<{ sessions: string[] }> {
    return this.request("GET", "/sessions");
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  getBatch(batchId: string): Promise<BatchPayload> {
    return this.request("GET", `/batches/${batchId}`);
  }

  submitLabels(
    batchId: string,
    records: LabelSubmission[],
  ): Promise<{ accepted: number; round: number; round_state: string }> {
    return this.request("POST", `/batches/${batchId}/labels`, { records });
  }

  getConflicts(sessionId: string, status?: string): Promise<{ conflicts: ConflictPayload[] }> {
    const suffix = status ? `?status=${status}` : "";
    return this.request("GET", `/sessions/${sessionId}/conflicts${suffix}`);
  }

  resolveConflict(
    conflictId: string,
    sessionId: string,
    finalLabel: string,
    rationale: string,
  ): Promise<ConflictPayload> {
    return this.request("POST", `/conflicts/${conflictId}/resolution`, {
      final_label: finalLabel,
      rationale,
      session_id: sessionId,
    });
  }

  train(sessionId: string, force = false): Promise<SnapshotInfo> {
    return this.request("POST", `/sessions/${sessionId}/train`, { force });
  }

  getPredictions(sessionId: string, kind?: string): Promise<{ predictions: Prediction[]; threshold: number }> {
    const suffix = kind ? `?kind=${kind}` : "";
    return this.request("GET", `/sessions/${sessionId}/predictions${suffix}`);
  }

  getReport(sessionId: string): Promise<ReportPayload> {
    return this.request("GET", `/sessions/${sessionId}/report`);
  }

  getParcel(parcelId: string, sessionId: string): Promise<ParcelDetail> {
    return this.request("GET", `/parcels/${parcelId}?session_id=${sessionId}`);
  }
}
