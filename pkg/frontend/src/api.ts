// Thin typed client over the experiment service. All numbers pass through
// untouched; the UI never does score math.

import type {
  ApiErrorBody,
  CreateSessionRequest,
  NextResponse,
  OutcomeResponse,
  ScaleResponse,
  SessionInfo,
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

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let body: Partial<ApiErrorBody> = {};
    try {
      body = await response.json();
    } catch {
      // non-JSON error body; keep the status only
    }
    throw new ApiError(
      response.status,
      body.code ?? "http_error",
      body.message ?? `request failed with status ${response.status}`,
    );
  }
  return response.json() as Promise<T>;
}

export function createSession(body: CreateSessionRequest): Promise<SessionInfo> {
  return request<SessionInfo>("/sessions", {
    method: "POST",
    body: JSON.stringify(body),
  });
}

export function nextPair(sessionId: string): Promise<NextResponse> {
  return request<NextResponse>(`/sessions/${encodeURIComponent(sessionId)}/next`);
}

export function submitOutcome(
  sessionId: string,
  pairId: string,
  choice: "first" | "second",
): Promise<OutcomeResponse> {
  return request<OutcomeResponse>(
    `/sessions/${encodeURIComponent(sessionId)}/outcomes`,
    { method: "POST", body: JSON.stringify({ pair_id: pairId, choice }) },
  );
}

export function getScale(sessionId: string): Promise<ScaleResponse> {
  return request<ScaleResponse>(
    `/sessions/${encodeURIComponent(sessionId)}/scale`,
  );
}

export function healthz(): Promise<{ status: string }> {
  return request<{ status: string }>("/healthz");
}
