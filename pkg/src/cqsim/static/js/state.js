// Pure view-state reducers; every transition round-trips the server, so these
// only fold server responses into the model the renderer consumes.
export const THETA_MAX = Math.log2(3);
export function initialState(theta = 0.7) {
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
export function clampTheta(value) {
    if (Number.isNaN(value))
        return 0;
    return Math.min(Math.max(value, 0), THETA_MAX);
}
export function startSession(state, sessionId, targetScene) {
    return {
        ...initialState(state.theta),
        sessionId,
        targetScene,
        canvas: { placements: [] },
    };
}
/** A user instruction may only be sent when no question is pending. */
export function canSendInstruction(state) {
    return state.sessionId !== null && state.pending === null;
}
export function canSendAnswer(state) {
    return state.sessionId !== null && state.pending !== null;
}
export function applyInstruction(state, text, response) {
    const chat = [...state.chat, { role: "teller", text }];
    if (response.question) {
        chat.push({ role: "question", text: response.question.text });
    }
    else {
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
export function applyAnswer(state, text, response) {
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
export function applyError(state, message) {
    return { ...state, error: message };
}
export function applyTheta(state, theta) {
    return { ...state, theta: clampTheta(theta), error: null };
}
/** Cliparts the threshold rule would currently ask about (strict >, top 2). */
export function wouldAsk(inspector, theta) {
    return inspector
        .filter((c) => c.h_size > theta)
        .sort((a, b) => b.h_size - a.h_size || a.clipart - b.clipart)
        .slice(0, 2)
        .map((c) => c.clipart);
}
/** Rebuild the chat log from a server transcript (consistency with GET state). */
export function chatFromTranscript(state) {
    const chat = [];
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
export function chatConsistent(state, server) {
    const rebuilt = chatFromTranscript(server);
    // local chat may also contain error-free client entries only; compare directly
    if (rebuilt.length !== state.chat.length)
        return false;
    return rebuilt.every((entry, i) => entry.role === state.chat[i].role && entry.text === state.chat[i].text);
}
