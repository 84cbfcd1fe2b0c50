// Typed client for the /v1 session API. Every call resolves to the full
// session envelope; errors carry the HTTP status so the UI can map 503
// and 409 to their dedicated banners.

export type SessionState = 'AwaitingAnswer' | 'Deliberating' | 'Complete' | 'Aborted';

export interface TranscriptEntry {
  role: string;
  text: string;
  node_label: string | null;
  at: number;
}

export interface SessionEnvelope {
  session_id: string;
  state: SessionState;
  turn: number;
  question: string | null;
  final_view: string | null;
  transcript: TranscriptEntry[];
}

export interface HealthReport {
  status: string;
  models_loaded: boolean;
  gateway_ready: boolean;
  sessions: number;
  detail: string | null;
}

/** Quick-reply literal; the server treats exactly this string as a non-answer. */
export const UNKNOWN_ANSWER = "I don't know";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

export class TimeoutError extends Error {
  constructor() {
    super('request timed out');
    this.name = 'TimeoutError';
  }
}

export interface ClientOptions {
  baseUrl?: string;
  /** Per-request deadline in ms; a losing race rejects with TimeoutError. */
  timeoutMs?: number;
  fetchFn?: typeof fetch;
}

async function parseDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === 'string') return body.detail;
    return JSON.stringify(body?.detail ?? body);
  } catch {
    return response.statusText || `HTTP ${response.status}`;
  }
}

export class SessionApi {
  private readonly baseUrl: string;
  private readonly timeoutMs: number;
  private readonly fetchFn: typeof fetch;

  constructor(options: ClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? '').replace(/\/$/, '');
    this.timeoutMs = options.timeoutMs ?? 10_000;
    // Bind so a bare global fetch keeps its expected receiver.
    this.fetchFn = options.fetchFn ?? ((...args) => fetch(...args));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const timeout = new Promise<never>((_, reject) => {
      setTimeout(() => reject(new TimeoutError()), this.timeoutMs);
    });
    const response = await Promise.race([this.fetchFn(this.baseUrl + path, init), timeout]);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return response.json() as Promise<T>;
  }

  openSession(narrative: string): Promise<SessionEnvelope> {
    return this.request<SessionEnvelope>('/v1/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ narrative }),
    });
  }

  submitAnswer(sessionId: string, text: string): Promise<SessionEnvelope> {
    return this.request<SessionEnvelope>(`/v1/sessions/${encodeURIComponent(sessionId)}/answers`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ text }),
    });
  }

  fetchSnapshot(sessionId: string): Promise<SessionEnvelope> {
    return this.request<SessionEnvelope>(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  fetchHealth(): Promise<HealthReport> {
    return this.request<HealthReport>('/v1/health');
  }
}
