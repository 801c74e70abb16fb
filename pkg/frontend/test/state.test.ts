import { describe, expect, it } from "vitest";

import type { MessageResponse, SessionStateJson } from "../src/api.js";
import {
  applyAnswer,
  applyInstruction,
  applyTheta,
  canSendAnswer,
  canSendInstruction,
  chatConsistent,
  chatFromTranscript,
  clampTheta,
  initialState,
  startSession,
  THETA_MAX,
  wouldAsk,
} from "../src/state.js";

const emptyScene = { placements: [] };

function messageResponse(question: { text: string; targets: number[] } | null): MessageResponse {
  return {
    drawer_reply: question ? question.text : "ok",
    question,
    canvas: emptyScene,
    uncertainty: { u_select_max: null, h_size_max: null, h_flip_max: null, per_clipart: [] },
  };
}

describe("theta slider model", () => {
  it("clamps to [0, log2(3)]", () => {
    expect(clampTheta(-1)).toBe(0);
    expect(clampTheta(99)).toBeCloseTo(THETA_MAX, 12);
    expect(clampTheta(0.7)).toBe(0.7);
  });

  it("applyTheta clears errors", () => {
    const state = { ...initialState(), error: "boom" };
    expect(applyTheta(state, 0.4).error).toBeNull();
  });
});

describe("instruction/answer alternation", () => {
  it("blocks instructions while a question is pending", () => {
    let state = startSession(initialState(), "s1", emptyScene);
    expect(canSendInstruction(state)).toBe(true);
    state = applyInstruction(state, "add a tree", messageResponse({
      text: "what size is the tree?", targets: [2],
    }));
    expect(canSendInstruction(state)).toBe(false);
    expect(canSendAnswer(state)).toBe(true);
  });

  it("answers clear the pending question", () => {
    let state = startSession(initialState(), "s1", emptyScene);
    state = applyInstruction(state, "add a tree", messageResponse({
      text: "what size is the tree?", targets: [2],
    }));
    state = applyAnswer(state, "the tree is small", {
      drawer_reply: "ok",
      canvas: emptyScene,
      uncertainty: { u_select_max: null, h_size_max: null, h_flip_max: null, per_clipart: [] },
    });
    expect(state.pending).toBeNull();
    expect(state.chat.map((entry) => entry.role)).toEqual(
      ["teller", "question", "answer", "drawer"],
    );
  });
});

describe("would-ask markers", () => {
  const clip = (id: number, h: number) => ({
    clipart: id, name: `c${id}`, u_select: 0, h_size: h, h_flip: 0, size_dist: null,
  });

  it("max slider clears all markers", () => {
    expect(wouldAsk([clip(1, 1.2), clip(2, THETA_MAX)], THETA_MAX)).toEqual([]);
  });

  it("zero slider marks every positive-entropy clipart up to two", () => {
    expect(wouldAsk([clip(1, 0.4), clip(2, 0.9), clip(3, 0.1)], 0)).toEqual([2, 1]);
  });

  it("uses strict comparison and id tie-break", () => {
    expect(wouldAsk([clip(5, 0.5), clip(3, 0.5)], 0.5)).toEqual([]);
    expect(wouldAsk([clip(5, 0.6), clip(3, 0.6)], 0.5)).toEqual([3, 5]);
  });
});

describe("transcript consistency", () => {
  it("local chat replays against the server transcript", () => {
    let state = startSession(initialState(), "s1", emptyScene);
    state = applyInstruction(state, "add a tree", messageResponse({
      text: "what size is the tree?", targets: [2],
    }));
    state = applyAnswer(state, "the tree is small", {
      drawer_reply: "ok",
      canvas: emptyScene,
      uncertainty: { u_select_max: null, h_size_max: null, h_flip_max: null, per_clipart: [] },
    });
    state = applyInstruction(state, "add a sun", messageResponse(null));

    const server: SessionStateJson = {
      session_id: "s1",
      theta: 0.7,
      target_scene: emptyScene,
      canvas: emptyScene,
      pending_question: null,
      transcript: [
        {
          turn_index: 0,
          teller_text: "add a tree",
          drawer_reply: "ok",
          cq: { question_text: "what size is the tree?", answer_text: "the tree is small" },
          canvas_after: emptyScene,
        },
        {
          turn_index: 1,
          teller_text: "add a sun",
          drawer_reply: "ok",
          cq: null,
          canvas_after: emptyScene,
        },
      ],
    };
    expect(chatConsistent(state, server)).toBe(true);
    expect(chatFromTranscript(server)).toHaveLength(6);
  });
});
