import type {
  ApiClient,
  FieldBody,
  GridSpec,
  PredictBody,
  SessionBody,
  VocabBody,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function toJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "http_error";
    let message = response.statusText;
    try {
      const body = await response.json();
      code = body.error ?? code;
      message = body.message ?? message;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, code, message);
  }
  return response.json() as Promise<T>;
}

/** fetch-based client for the service's /v1 endpoints. */
export class HttpApiClient implements ApiClient {
  constructor(private readonly base: string = "") {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return fetch(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => toJson<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return fetch(this.base + path).then((r) => toJson<T>(r));
  }

  createSession(source: { actions?: string; log?: string; session_index?: number }) {
    return this.post<SessionBody>("/v1/sessions", source);
  }

  step(sessionId: string) {
    return this.post<SessionBody>(`/v1/sessions/${sessionId}/step`, {});
  }

  whatif(sessionId: string, action: string) {
    return this.post<SessionBody>(`/v1/sessions/${sessionId}/whatif`, { action });
  }

  undoWhatif(sessionId: string) {
    return this.post<SessionBody>(`/v1/sessions/${sessionId}/whatif`, { undo: true });
  }

  reset(sessionId: string) {
    return this.post<SessionBody>(`/v1/sessions/${sessionId}/reset`, {});
  }

  predict(sessionId: string, k: number, filter?: string) {
    const query = filter ? `?k=${k}&filter=${encodeURIComponent(filter)}` : `?k=${k}`;
    return this.get<PredictBody>(`/v1/sessions/${sessionId}/predict${query}`);
  }

  field(sessionId: string, grid: GridSpec) {
    const q = `?ox=${grid.ox}&oy=${grid.oy}&nx=${grid.nx}&ny=${grid.ny}&step=${grid.step}`;
    return this.get<FieldBody>(`/v1/sessions/${sessionId}/field${q}`);
  }

  vocab() {
    return this.get<VocabBody>("/v1/vocab");
  }

  async patchBytes(ref: string): Promise<Uint8Array> {
    const response = await fetch(this.base + ref);
    if (!response.ok) {
      throw new ApiError(response.status, "patch_fetch", `cannot load ${ref}`);
    }
    return new Uint8Array(await response.arrayBuffer());
  }
}
