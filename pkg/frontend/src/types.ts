export interface Prediction {
  action: string;
  prob: number;
  patch_ref?: string;
}

export interface TakenAction {
  action: string;
  t: number;
  app: string;
}

export interface SessionBody {
  id: string;
  cursor: number;
  length: number;
  synthetic: string[];
  eof: boolean;
  taken?: TakenAction;
  predictions?: Prediction[];
  window?: string[];
  k?: number;
  elapsed_ms?: number;
}

export interface PredictBody {
  predictions: Prediction[];
  window: string[];
  k: number;
  elapsed_ms: number;
}

export interface VocabBody {
  actions: string[];
  apps: string[];
  size: number;
}

export interface FieldTarget {
  center: number[];
  rect: number[];
  confidence: number;
}

export interface FieldBody {
  origin: number[];
  step: number;
  nx: number;
  ny: number;
  vectors: number[][];
  targets: FieldTarget[];
  reason?: string;
  elapsed_ms: number;
}

export interface GridSpec {
  ox: number;
  oy: number;
  nx: number;
  ny: number;
  step: number;
}

/** Everything the explorer needs from the /v1 API. */
export interface ApiClient {
  createSession(source: { actions?: string; log?: string; session_index?: number }): Promise<SessionBody>;
  step(sessionId: string): Promise<SessionBody>;
  whatif(sessionId: string, action: string): Promise<SessionBody>;
  undoWhatif(sessionId: string): Promise<SessionBody>;
  reset(sessionId: string): Promise<SessionBody>;
  predict(sessionId: string, k: number, filter?: string): Promise<PredictBody>;
  field(sessionId: string, grid: GridSpec): Promise<FieldBody>;
  vocab(): Promise<VocabBody>;
  patchBytes(ref: string): Promise<Uint8Array>;
}
