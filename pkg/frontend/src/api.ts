// Typed client for the session API. Field names mirror the server payloads.

export interface PlacementJson {
  clipart: number;
  size: "small" | "medium" | "large";
  flip: "facing_left" | "facing_right";
  x: number;
  y: number;
  expression: number | null;
  pose: number | null;
}

export interface SceneJson {
  placements: PlacementJson[];
}

export interface GalleryEntryJson {
  id: number;
  name: string;
  is_person: boolean;
  is_symmetric: boolean;
  expression_count: number;
  pose_count: number;
}

export interface ClipartUncertaintyJson {
  clipart: number;
  name: string;
  u_select: number;
  h_size: number;
  h_flip: number;
  size_dist: number[] | null;
}

export interface UncertaintyJson {
  u_select_max: number | null;
  h_size_max: number | null;
  h_flip_max: number | null;
  per_clipart: ClipartUncertaintyJson[];
}

export interface QuestionJson {
  text: string;
  targets: number[];
}

export interface CreateSessionResponse {
  session_id: string;
  target_scene: SceneJson;
  gallery: GalleryEntryJson[];
}

export interface MessageResponse {
  drawer_reply: string;
  question: QuestionJson | null;
  canvas: SceneJson;
  uncertainty: UncertaintyJson;
}

export interface AnswerResponse {
  drawer_reply: string;
  canvas: SceneJson;
  uncertainty: UncertaintyJson;
}

export interface TranscriptTurnJson {
  turn_index: number;
  teller_text: string;
  drawer_reply: string;
  cq: { question_text: string; answer_text: string } | null;
  canvas_after: SceneJson;
}

export interface SessionStateJson {
  session_id: string;
  theta: number;
  target_scene: SceneJson;
  canvas: SceneJson;
  pending_question: QuestionJson | null;
  transcript: TranscriptTurnJson[];
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
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
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, code, message);
  }
  return res.json() as Promise<T>;
}

export class Client {
  constructor(private base: string = "") {}

  createSession(theta: number, seed: number): Promise<CreateSessionResponse> {
    return request(this.base, "/api/session", {
      method: "POST",
      body: JSON.stringify({ theta, seed }),
    });
  }

  sendInstruction(sessionId: string, text: string): Promise<MessageResponse> {
    return request(this.base, `/api/session/${sessionId}/message`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  sendAnswer(sessionId: string, text: string): Promise<AnswerResponse> {
    return request(this.base, `/api/session/${sessionId}/answer`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  patchTheta(sessionId: string, theta: number): Promise<{ ok: boolean; theta: number }> {
    return request(this.base, `/api/session/${sessionId}/config`, {
      method: "PATCH",
      body: JSON.stringify({ theta }),
    });
  }

  getState(sessionId: string): Promise<SessionStateJson> {
    return request(this.base, `/api/session/${sessionId}`);
  }

  getGallery(): Promise<{ gallery: GalleryEntryJson[] }> {
    return request(this.base, "/api/gallery");
  }
}
