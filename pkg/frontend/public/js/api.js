// Thin typed client over the experiment service. All numbers pass through
// untouched; the UI never does score math.
export class ApiError extends Error {
    status;
    code;
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
async function request(path, init) {
    const response = await fetch(path, {
        headers: { "content-type": "application/json" },
        ...init,
    });
    if (!response.ok) {
        let body = {};
        try {
            body = await response.json();
        }
        catch {
            // non-JSON error body; keep the status only
        }
        throw new ApiError(response.status, body.code ?? "http_error", body.message ?? `request failed with status ${response.status}`);
    }
    return response.json();
}
export function createSession(body) {
    return request("/sessions", {
        method: "POST",
        body: JSON.stringify(body),
    });
}
export function nextPair(sessionId) {
    return request(`/sessions/${encodeURIComponent(sessionId)}/next`);
}
export function submitOutcome(sessionId, pairId, choice) {
    return request(`/sessions/${encodeURIComponent(sessionId)}/outcomes`, { method: "POST", body: JSON.stringify({ pair_id: pairId, choice }) });
}
export function getScale(sessionId) {
    return request(`/sessions/${encodeURIComponent(sessionId)}/scale`);
}
export function healthz() {
    return request("/healthz");
}
