// DOM wiring for the playground: one session per tab, no optimistic updates.
import { ApiError, Client } from "./api.js";
import { inspectorRows, sceneToSvg } from "./render.js";
import { applyAnswer, applyError, applyInstruction, applyTheta, canSendAnswer, canSendInstruction, initialState, startSession, THETA_MAX, wouldAsk, } from "./state.js";
const client = new Client();
let state = initialState();
let gallery = [];
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
function render() {
    el("target-panel").innerHTML = state.targetScene
        ? sceneToSvg(state.targetScene, gallery)
        : "";
    el("canvas-panel").innerHTML = state.canvas ? sceneToSvg(state.canvas, gallery) : "";
    const log = el("chat-log");
    log.innerHTML = state.chat
        .map((entry) => `<div class="msg ${entry.role}">` +
        `<span class="who">${entry.role}</span>${escapeHtml(entry.text)}</div>`)
        .join("");
    log.scrollTop = log.scrollHeight;
    const input = el("chat-input");
    const button = el("chat-send");
    if (state.pending) {
        input.placeholder = `answer: ${state.pending.text}`;
        button.textContent = "answer";
    }
    else {
        input.placeholder = "describe the target scene for the drawer";
        button.textContent = "send";
    }
    el("theta-value").textContent = state.theta.toFixed(2);
    const marked = wouldAsk(state.inspector, state.theta);
    const rows = inspectorRows(state.inspector, marked);
    el("inspector").innerHTML = rows.length
        ? rows
            .map((row) => `<div class="inspect-row${row.marked ? " would-ask" : ""}">` +
            `<span class="inspect-name">${row.name}</span>` +
            `<span class="inspect-h">H=${row.hSize}</span>` +
            `<span class="bars">${row.bars
                .map((bar) => `<span class="bar ${bar.label}" style="width:${bar.pct.toFixed(1)}%"` +
                ` title="${bar.label}"></span>`)
                .join("")}</span></div>`)
            .join("")
        : '<div class="inspect-empty">no cliparts drawn this turn</div>';
    el("error-box").textContent = state.error ?? "";
    el("error-box").style.display = state.error ? "block" : "none";
}
function escapeHtml(text) {
    return text.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}
async function newSession() {
    const seed = Math.floor(Math.random() * 1000000);
    const created = await client.createSession(state.theta, seed);
    gallery = created.gallery;
    state = startSession(state, created.session_id, created.target_scene);
    render();
}
async function submit() {
    const input = el("chat-input");
    const text = input.value.trim();
    if (!text || !state.sessionId)
        return;
    try {
        if (canSendAnswer(state)) {
            const response = await client.sendAnswer(state.sessionId, text);
            state = applyAnswer(state, text, response);
        }
        else if (canSendInstruction(state)) {
            const response = await client.sendInstruction(state.sessionId, text);
            state = applyInstruction(state, text, response);
        }
        input.value = "";
    }
    catch (err) {
        // surface the server's guidance and keep the draft text in the input
        state = applyError(state, err instanceof ApiError ? err.message : String(err));
    }
    render();
}
async function onThetaChange() {
    const slider = el("theta-slider");
    const value = parseFloat(slider.value);
    if (!state.sessionId) {
        state = applyTheta(state, value);
        render();
        return;
    }
    const previous = state.theta;
    try {
        const response = await client.patchTheta(state.sessionId, value);
        state = applyTheta(state, response.theta);
    }
    catch (err) {
        slider.value = String(previous); // snap back on rejection
        state = applyError(state, err instanceof ApiError ? err.message : String(err));
    }
    render();
}
function boot() {
    const slider = el("theta-slider");
    slider.min = "0";
    slider.max = THETA_MAX.toFixed(4);
    slider.step = "0.01";
    slider.value = state.theta.toFixed(2);
    slider.addEventListener("change", () => void onThetaChange());
    el("chat-send").addEventListener("click", () => void submit());
    el("chat-input").addEventListener("keydown", (event) => {
        if (event.key === "Enter")
            void submit();
    });
    el("new-session").addEventListener("click", () => void newSession());
    void newSession().catch((err) => {
        state = applyError(state, String(err));
        render();
    });
}
document.addEventListener("DOMContentLoaded", boot);
