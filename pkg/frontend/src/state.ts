// View state and form validation. Validation mirrors the server's edit
// invariants exactly: indices within bounds, scale within [-2, 2], phrases
// non-empty. Every displayed value traces back to a server payload whose
// hash is kept for the dev-mode integrity check.

import type { EditSpec, SessionPayload, Suggestions, SuggestionCandidate } from "./api";

export const SCALE_MIN = -2;
export const SCALE_MAX = 2;

export type EditKind = "word_swap" | "add_phrase" | "reweight";

export interface EditForm {
  kind: EditKind;
  index: number;
  word: string;
  phrase: string;
  position: number;
  scale: number;
  useInjection: boolean;
}

export interface ViewState {
  sessionId: string | null;
  round: number;
  status: string;
  rewards: number[];
  tokens: string[];
  weights: number[];
  image: SessionPayload["image"] | null;
  imagePng: string;
  heatmaps: number[][];
  suggestions: Suggestions | null;
  form: EditForm;
  payloadHash: string;
  error: string | null;
  busy: boolean;
}

export function initialForm(): EditForm {
  return {
    kind: "reweight",
    index: 0,
    word: "",
    phrase: "",
    position: 0,
    scale: 1,
    useInjection: true,
  };
}

export function initialViewState(): ViewState {
  return {
    sessionId: null,
    round: 0,
    status: "none",
    rewards: [],
    tokens: [],
    weights: [],
    image: null,
    imagePng: "",
    heatmaps: [],
    suggestions: null,
    form: initialForm(),
    payloadHash: "",
    error: null,
    busy: false,
  };
}

export function clampScale(value: number): number {
  if (Number.isNaN(value)) return 1;
  return Math.min(SCALE_MAX, Math.max(SCALE_MIN, value));
}

// FNV-1a over a canonical serialization; enough to catch any fabricated or
// stale view in dev mode without pulling in a crypto dependency.
export function fnv1a(text: string): string {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}

export function payloadHash(payload: SessionPayload): string {
  return fnv1a(
    JSON.stringify([
      payload.id,
      payload.round,
      payload.status,
      payload.reward_history,
      payload.image.data,
    ])
  );
}

export function applyServerPayload(state: ViewState, payload: SessionPayload): ViewState {
  return {
    ...state,
    sessionId: payload.id,
    round: payload.round,
    status: payload.status,
    rewards: payload.reward_history.slice(),
    tokens: payload.attention.tokens.slice(),
    weights: payload.prompt.map((p) => p.weight),
    image: payload.image,
    imagePng: payload.image_png,
    heatmaps: payload.attention.heatmaps,
    payloadHash: payloadHash(payload),
    error: null,
  };
}

export function controlsEnabled(state: ViewState): boolean {
  return state.sessionId !== null && state.status === "active" && !state.busy;
}

export function isTerminal(status: string): boolean {
  return (
    status === "accepted_by_threshold" ||
    status === "exhausted_rounds" ||
    status === "accepted_by_user"
  );
}

export type FormResult = { ok: true; edit: EditSpec } | { ok: false; reason: string };

export function editFromForm(form: EditForm, tokenCount: number): FormResult {
  if (form.kind === "word_swap") {
    if (!form.word.trim()) return { ok: false, reason: "replacement word is empty" };
    if (form.word.trim().includes(" ")) return { ok: false, reason: "swap takes a single word" };
    if (form.index < 0 || form.index >= tokenCount) {
      return { ok: false, reason: `index must be in [0, ${tokenCount - 1}]` };
    }
    return { ok: true, edit: { type: "word_swap", index: form.index, new: form.word.trim() } };
  }
  if (form.kind === "add_phrase") {
    const words = form.phrase.trim().split(/\s+/).filter((w) => w.length > 0);
    if (words.length === 0) return { ok: false, reason: "phrase is empty" };
    if (form.position < 0 || form.position > tokenCount) {
      return { ok: false, reason: `position must be in [0, ${tokenCount}]` };
    }
    return { ok: true, edit: { type: "add_phrase", position: form.position, words } };
  }
  if (form.index < 0 || form.index >= tokenCount) {
    return { ok: false, reason: `index must be in [0, ${tokenCount - 1}]` };
  }
  const scale = clampScale(form.scale);
  return { ok: true, edit: { type: "reweight", index: form.index, scale } };
}

export function prefillFromSuggestion(form: EditForm, candidate: SuggestionCandidate): EditForm {
  const edit = candidate.edit;
  if (edit.type === "word_swap") {
    return { ...form, kind: "word_swap", index: edit.index, word: edit.new };
  }
  if (edit.type === "add_phrase") {
    return { ...form, kind: "add_phrase", position: edit.position, phrase: edit.words.join(" ") };
  }
  return { ...form, kind: "reweight", index: edit.index, scale: clampScale(edit.scale) };
}

export function formatProbability(p: number): string {
  return `${Math.round(p * 100)}%`;
}
