// Typed client for the session API. Field names mirror the server payloads.
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
async function request(base, path, init) {
    const res = await fetch(base + path, {
        headers: { "Content-Type": "application/json" },
        ...init,
    });
    if (!res.ok) {
        let code = "http_error";
        let message = res.statusText;
        try {
            const body = await res.json();
            code = body.error ?? code;
            message = body.message ?? message;
        }
        catch {
            // non-JSON error body; keep the status text
        }
        throw new ApiError(res.status, code, message);
    }
    return res.json();
}
export class Client {
    constructor(base = "") {
        this.base = base;
    }
    createSession(theta, seed) {
        return request(this.base, "/api/session", {
            method: "POST",
            body: JSON.stringify({ theta, seed }),
        });
    }
    sendInstruction(sessionId, text) {
        return request(this.base, `/api/session/${sessionId}/message`, {
            method: "POST",
            body: JSON.stringify({ text }),
        });
    }
    sendAnswer(sessionId, text) {
        return request(this.base, `/api/session/${sessionId}/answer`, {
            method: "POST",
            body: JSON.stringify({ text }),
        });
    }
    patchTheta(sessionId, theta) {
        return request(this.base, `/api/session/${sessionId}/config`, {
            method: "PATCH",
            body: JSON.stringify({ theta }),
        });
    }
    getState(sessionId) {
        return request(this.base, `/api/session/${sessionId}`);
    }
    getGallery() {
        return request(this.base, "/api/gallery");
    }
}
