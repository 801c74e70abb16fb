// Pure view-state reducers; every transition round-trips the server, so these
// only fold server responses into the model the renderer consumes.

import type {
  AnswerResponse,
  ClipartUncertaintyJson,
  MessageResponse,
  QuestionJson,
  SceneJson,
  SessionStateJson,
} from "./api.js";

export const THETA_MAX = Math.log2(3);

export type Role = "teller" | "drawer" | "question" | "answer" | "system";

export interface ChatEntry {
  role: Role;
  text: string;
}

export interface ViewState {
  sessionId: string | null;
  targetScene: SceneJson | null;
  canvas: SceneJson | null;
  chat: ChatEntry[];
  pending: QuestionJson | null;
  theta: number;
  inspector: ClipartUncertaintyJson[];
  error: string | null;
}

export function initialState(theta = 0.7): ViewState {
  return {
    sessionId: null,
    targetScene: null,
    canvas: null,
    chat: [],
    pending: null,
    theta: clampTheta(theta),
    inspector: [],
    error: null,
  };
}

export function clampTheta(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(Math.max(value, 0), THETA_MAX);
}

export function startSession(
  state: ViewState,
  sessionId: string,
  targetScene: SceneJson,
): ViewState {
  return {
    ...initialState(state.theta),
    sessionId,
    targetScene,
    canvas: { placements: [] },
  };
}

/** A user instruction may only be sent when no question is pending. */
export function canSendInstruction(state: ViewState): boolean {
  return state.sessionId !== null && state.pending === null;
}

export function canSendAnswer(state: ViewState): boolean {
  return state.sessionId !== null && state.pending !== null;
}

export function applyInstruction(
  state: ViewState,
  text: string,
  response: MessageResponse,
): ViewState {
  const chat: ChatEntry[] = [...state.chat, { role: "teller", text }];
  if (response.question) {
    chat.push({ role: "question", text: response.question.text });
  } else {
    chat.push({ role: "drawer", text: response.drawer_reply });
  }
  return {
    ...state,
    chat,
    canvas: response.canvas,
    pending: response.question,
    inspector: response.uncertainty.per_clipart,
    error: null,
  };
}

export function applyAnswer(
  state: ViewState,
  text: string,
  response: AnswerResponse,
): ViewState {
  return {
    ...state,
    chat: [
      ...state.chat,
      { role: "answer", text },
      { role: "drawer", text: response.drawer_reply },
    ],
    canvas: response.canvas,
    pending: null,
    inspector: response.uncertainty.per_clipart,
    error: null,
  };
}

export function applyError(state: ViewState, message: string): ViewState {
  return { ...state, error: message };
}

export function applyTheta(state: ViewState, theta: number): ViewState {
  return { ...state, theta: clampTheta(theta), error: null };
}

/** Cliparts the threshold rule would currently ask about (strict >, top 2). */
export function wouldAsk(inspector: ClipartUncertaintyJson[], theta: number): number[] {
  return inspector
    .filter((c) => c.h_size > theta)
    .sort((a, b) => b.h_size - a.h_size || a.clipart - b.clipart)
    .slice(0, 2)
    .map((c) => c.clipart);
}

/** Rebuild the chat log from a server transcript (consistency with GET state). */
export function chatFromTranscript(state: SessionStateJson): ChatEntry[] {
  const chat: ChatEntry[] = [];
  for (const turn of state.transcript) {
    chat.push({ role: "teller", text: turn.teller_text });
    if (turn.cq) {
      chat.push({ role: "question", text: turn.cq.question_text });
      chat.push({ role: "answer", text: turn.cq.answer_text });
    }
    chat.push({ role: "drawer", text: turn.drawer_reply });
  }
  if (state.pending_question) {
    chat.push({ role: "question", text: state.pending_question.text });
  }
  return chat;
}

/** The local chat log must replay exactly against the server transcript. */
export function chatConsistent(state: ViewState, server: SessionStateJson): boolean {
  const rebuilt = chatFromTranscript(server);
  // local chat may also contain error-free client entries only; compare directly
  if (rebuilt.length !== state.chat.length) return false;
  return rebuilt.every(
    (entry, i) => entry.role === state.chat[i].role && entry.text === state.chat[i].text,
  );
}
