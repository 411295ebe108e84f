/** Typed client over the workspace HTTP+JSON API. */

export interface TraceEntry {
  support_id: string;
  start_dot: number;
  end_dot: number;
  attention_weight: number;
}

export interface PredictedSpan {
  start: number;
  end: number;
  entity_type: string;
  p_start: number;
  p_end: number;
  span_score: number;
  trace: TraceEntry[];
}

export interface Prediction {
  query_tokens: string[];
  spans: PredictedSpan[];
  truncated: boolean;
}

export interface PredictResponse {
  revision: number;
  prediction: Prediction;
}

export interface SupportRecord {
  entity_type: string;
  tokens: string[];
  entity_start: number;
  entity_end: number;
}

export interface StoredSupport extends SupportRecord {
  support_id: string;
}

export interface EntityTypeInfo {
  name: string;
  count: number;
}

export interface ScoringOverrides {
  algorithm?: string;
  k?: number;
  temperature?: number;
  top_n?: number;
  max_span_length?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      code = body.code ?? code;
      message = body.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(response.status, code, message);
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class WorkspaceClient {
  constructor(
    readonly baseUrl: string,
    readonly workspaceId: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/workspaces/${encodeURIComponent(this.workspaceId)}${path}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.url(path), {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  revision(): Promise<{ revision: number }> {
    return this.request("/revision");
  }

  listEntityTypes(): Promise<{ revision: number; entity_types: EntityTypeInfo[] }> {
    return this.request("/entity-types");
  }

  addEntityType(name: string): Promise<{ revision: number; name: string }> {
    return this.request("/entity-types", {
      method: "POST",
      body: JSON.stringify({ name }),
    });
  }

  deleteEntityType(name: string): Promise<{ revision: number }> {
    return this.request(`/entity-types/${encodeURIComponent(name)}`, { method: "DELETE" });
  }

  listSupports(): Promise<{ revision: number; supports: StoredSupport[] }> {
    return this.request("/supports");
  }

  addSupport(record: SupportRecord): Promise<{ revision: number; support_id: string }> {
    return this.request("/supports", {
      method: "POST",
      body: JSON.stringify(record),
    });
  }

  deleteSupport(supportId: string): Promise<{ revision: number }> {
    return this.request(`/supports/${encodeURIComponent(supportId)}`, { method: "DELETE" });
  }

  predict(tokens: string[], overrides?: ScoringOverrides): Promise<PredictResponse> {
    return this.request("/predict", {
      method: "POST",
      body: JSON.stringify({ tokens, ...(overrides ?? {}) }),
    });
  }
}
