import { describe, expect, it } from "vitest";

import type { SessionPayload } from "./api";
import {
  applyServerPayload,
  clampScale,
  controlsEnabled,
  editFromForm,
  formatProbability,
  initialForm,
  initialViewState,
  isTerminal,
  payloadHash,
  prefillFromSuggestion,
} from "./state";

function samplePayload(overrides: Partial<SessionPayload> = {}): SessionPayload {
  return {
    id: "svc-000001-abc",
    round: 0,
    status: "active",
    clip_score: 0.84,
    reward_history: [0.84],
    prompt: [
      { surface: "a", weight: 1 },
      { surface: "garden", weight: 1 },
    ],
    image: { h: 2, w: 2, c: 3, data: new Array(12).fill(0.5) },
    image_png: "data:image/png;base64,xyz",
    attention: { tokens: ["a", "garden"], heatmaps: [[0.5, 0.5, 0.5, 0.5], [0.5, 0.5, 0.5, 0.5]] },
    ...overrides,
  };
}

describe("clampScale", () => {
  it("clamps to [-2, 2]", () => {
    expect(clampScale(5)).toBe(2);
    expect(clampScale(-5)).toBe(-2);
    expect(clampScale(1.25)).toBe(1.25);
    expect(clampScale(2)).toBe(2);
    expect(clampScale(-2)).toBe(-2);
  });
  it("falls back to identity scale on NaN", () => {
    expect(clampScale(Number.NaN)).toBe(1);
  });
});

describe("editFromForm", () => {
  const base = initialForm();

  it("rejects empty phrases client-side", () => {
    const result = editFromForm({ ...base, kind: "add_phrase", phrase: "   " }, 3);
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.reason).toMatch(/empty/);
  });

  it("splits phrases into words", () => {
    const result = editFromForm({ ...base, kind: "add_phrase", phrase: " with  flowers ", position: 3 }, 3);
    expect(result).toEqual({ ok: true, edit: { type: "add_phrase", position: 3, words: ["with", "flowers"] } });
  });

  it("bounds swap index like the server", () => {
    expect(editFromForm({ ...base, kind: "word_swap", word: "x", index: 3 }, 3).ok).toBe(false);
    expect(editFromForm({ ...base, kind: "word_swap", word: "x", index: -1 }, 3).ok).toBe(false);
    expect(editFromForm({ ...base, kind: "word_swap", word: "x", index: 2 }, 3).ok).toBe(true);
  });

  it("rejects multi-word swaps", () => {
    expect(editFromForm({ ...base, kind: "word_swap", word: "two words", index: 0 }, 3).ok).toBe(false);
  });

  it("clamps reweight scale into the legal range", () => {
    const result = editFromForm({ ...base, kind: "reweight", index: 1, scale: 9 }, 3);
    expect(result).toEqual({ ok: true, edit: { type: "reweight", index: 1, scale: 2 } });
  });

  it("bounds add position to token count inclusive", () => {
    expect(editFromForm({ ...base, kind: "add_phrase", phrase: "x", position: 4 }, 3).ok).toBe(false);
    expect(editFromForm({ ...base, kind: "add_phrase", phrase: "x", position: 3 }, 3).ok).toBe(true);
  });
});

describe("applyServerPayload", () => {
  it("copies every displayed field from the payload and hashes it", () => {
    const state = applyServerPayload(initialViewState(), samplePayload());
    expect(state.sessionId).toBe("svc-000001-abc");
    expect(state.tokens).toEqual(["a", "garden"]);
    expect(state.weights).toEqual([1, 1]);
    expect(state.rewards).toEqual([0.84]);
    expect(state.payloadHash).toBe(payloadHash(samplePayload()));
    expect(state.payloadHash).toMatch(/^[0-9a-f]{8}$/);
  });

  it("hash changes when the image changes", () => {
    const a = payloadHash(samplePayload());
    const b = payloadHash(samplePayload({ image: { h: 2, w: 2, c: 3, data: new Array(12).fill(0.6) } }));
    expect(a).not.toBe(b);
  });
});

describe("terminal handling", () => {
  it("controls enabled only while active", () => {
    const active = applyServerPayload(initialViewState(), samplePayload());
    expect(controlsEnabled(active)).toBe(true);
    for (const status of ["accepted_by_threshold", "exhausted_rounds", "accepted_by_user"]) {
      const term = applyServerPayload(initialViewState(), samplePayload({ status }));
      expect(isTerminal(status)).toBe(true);
      expect(controlsEnabled(term)).toBe(false);
    }
    expect(controlsEnabled({ ...active, busy: true })).toBe(false);
    expect(controlsEnabled(initialViewState())).toBe(false);
  });
});

describe("suggestions", () => {
  it("prefills the form from a candidate", () => {
    const form = prefillFromSuggestion(initialForm(), {
      strategy: "add_phrase",
      edit: { type: "add_phrase", position: 3, words: ["with", "flowers"] },
      feedback: "add 'with flowers'",
    });
    expect(form.kind).toBe("add_phrase");
    expect(form.phrase).toBe("with flowers");
    expect(form.position).toBe(3);
    const rw = prefillFromSuggestion(initialForm(), {
      strategy: "reweight",
      edit: { type: "reweight", index: 1, scale: 1.5 },
      feedback: "make 'garden' more prominent",
    });
    expect(rw.kind).toBe("reweight");
    expect(rw.scale).toBe(1.5);
  });

  it("formats probabilities to whole percent", () => {
    expect(formatProbability(1 / 3)).toBe("33%");
    expect(formatProbability(0.5)).toBe("50%");
  });
});
