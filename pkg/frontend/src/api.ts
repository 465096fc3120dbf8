// Typed client for the session service. Every number the UI shows comes
// through here; nothing is computed client-side.

import type {
  CaseSummary,
  EventDiff,
  EventRequest,
  Grid,
  SchemaResponse,
  SessionResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Stale seq: someone else advanced the session; refresh and retry. */
export class ConflictError extends ApiError {}

/** Session already finalized. */
export class GoneError extends ApiError {}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status text
  }
  if (res.status === 409) return new ConflictError(409, detail);
  if (res.status === 410) return new GoneError(410, detail);
  return new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(private base: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  getSchema(): Promise<SchemaResponse> {
    return this.request("/schema");
  }

  listCases(): Promise<CaseSummary[]> {
    return this.request("/cases");
  }

  createSession(caseId: string): Promise<SessionResponse> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ case_id: caseId }),
    });
  }

  getSession(sessionId: string): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}`);
  }

  postEvent(sessionId: string, event: EventRequest): Promise<EventDiff> {
    return this.request(`/sessions/${sessionId}/events`, {
      method: "POST",
      body: JSON.stringify(event),
    });
  }

  finalize(
    sessionId: string,
    label: string,
    override: boolean,
  ): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}/finalize`, {
      method: "POST",
      body: JSON.stringify({ label, override }),
    });
  }

  imageUrl(caseId: string): string {
    return `${this.base}/cases/${caseId}/image`;
  }

  async fetchHeatmap(caseId: string, conceptId: string): Promise<Grid> {
    const res = await fetch(`${this.base}/cases/${caseId}/heatmaps/${conceptId}`);
    if (!res.ok) throw await parseError(res);
    return parsePgm(await res.text());
  }
}

/** Parse an ASCII (P2) grayscale grid into normalized values. */
export function parsePgm(text: string): Grid {
  const tokens = text
    .split("\n")
    .map((line) => line.split("#", 1)[0])
    .join(" ")
    .trim()
    .split(/\s+/);
  if (tokens[0] !== "P2") throw new Error("expected a P2 PGM heatmap");
  const cols = Number(tokens[1]);
  const rows = Number(tokens[2]);
  const maxval = Number(tokens[3]);
  const values = new Float64Array(rows * cols);
  if (tokens.length - 4 < rows * cols) throw new Error("truncated PGM heatmap");
  for (let i = 0; i < rows * cols; i++) {
    values[i] = Number(tokens[4 + i]) / Math.max(maxval, 1);
  }
  return { rows, cols, values };
}
