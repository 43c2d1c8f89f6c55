// Browser client for steering a live refinement session. The client never
// fabricates state: everything rendered comes from the last server payload
// (enforced in dev mode by hashing), and each edit waits for the server
// round trip before the controls unlock.

import { ApiError, Client, SessionPayload, SuggestionCandidate } from "./api";
import { drawImageScaled, heatmapBytes, rewardPath } from "./render";
import {
  ViewState,
  applyServerPayload,
  clampScale,
  controlsEnabled,
  editFromForm,
  formatProbability,
  initialViewState,
  isTerminal,
  payloadHash,
  prefillFromSuggestion,
} from "./state";

const DEV_MODE = new URLSearchParams(location.search).has("dev");
const IMAGE_SCALE = 8;

const client = new Client("");
let state: ViewState = initialViewState();
let lastPayload: SessionPayload | null = null;
let heatmapToken: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setError(message: string | null, retry?: () => void): void {
  state = { ...state, error: message };
  const banner = el<HTMLDivElement>("error-banner");
  banner.innerHTML = "";
  banner.hidden = message === null;
  if (message !== null) {
    banner.append(message);
    if (retry) {
      const btn = document.createElement("button");
      btn.textContent = "retry";
      btn.onclick = () => {
        setError(null);
        retry();
      };
      banner.append(" ", btn);
    }
  }
}

function verifyIntegrity(): void {
  if (!DEV_MODE || !lastPayload) return;
  const expected = payloadHash(lastPayload);
  if (expected !== state.payloadHash) {
    console.warn(`payload hash mismatch: view ${state.payloadHash} vs server ${expected}`);
  } else {
    console.info(`payload hash ok: ${expected}`);
  }
}

function renderTokens(): void {
  const holder = el<HTMLDivElement>("tokens");
  holder.innerHTML = "";
  state.tokens.forEach((surface, i) => {
    const chip = document.createElement("button");
    chip.className = "chip" + (heatmapToken === i ? " active" : "");
    chip.textContent = `${surface} (${state.weights[i]?.toFixed(2) ?? "1.00"})`;
    chip.title = "toggle attention heatmap, click selects token for edits";
    chip.onclick = () => {
      heatmapToken = heatmapToken === i ? null : i;
      state = { ...state, form: { ...state.form, index: i, position: Math.min(i + 1, state.tokens.length) } };
      syncFormInputs();
      renderImage();
      renderTokens();
    };
    holder.append(chip);
  });
}

function renderImage(): void {
  if (!state.image) return;
  const canvas = el<HTMLCanvasElement>("image-canvas");
  const overlay =
    heatmapToken !== null && state.heatmaps[heatmapToken]
      ? heatmapBytes(state.heatmaps[heatmapToken], state.image.h, state.image.w)
      : undefined;
  drawImageScaled(canvas, state.image, IMAGE_SCALE, overlay);
}

function renderRewards(): void {
  const svg = el<HTMLElement>("reward-chart");
  const path = rewardPath(state.rewards, 360, 120);
  const points = state.rewards
    .map((r, i) => `<title>round ${i}: ${r.toFixed(4)}</title>`)
    .join("");
  svg.innerHTML =
    `<rect x="0" y="0" width="360" height="120" class="chart-bg"></rect>` +
    (path ? `<path d="${path}" class="chart-line">${points}</path>` : "");
  el<HTMLSpanElement>("score-now").textContent =
    state.rewards.length > 0 ? state.rewards[state.rewards.length - 1].toFixed(4) : "-";
  el<HTMLSpanElement>("round-now").textContent = String(state.round);
}

function renderStatus(): void {
  const badge = el<HTMLSpanElement>("status-badge");
  badge.textContent = state.status;
  badge.className = "status " + (isTerminal(state.status) ? "terminal" : "active");
  const banner = el<HTMLDivElement>("terminal-banner");
  banner.hidden = !isTerminal(state.status);
  if (isTerminal(state.status)) {
    banner.textContent =
      state.status === "accepted_by_threshold"
        ? "Accepted: the alignment score crossed the stop threshold."
        : state.status === "accepted_by_user"
          ? "Accepted by you. Session closed."
          : "Round budget exhausted; final image returned.";
  }
}

function syncControls(): void {
  const enabled = controlsEnabled(state);
  for (const id of ["apply-edit", "suggest-btn", "accept-btn", "swap-word", "swap-index",
                    "phrase-text", "phrase-pos", "scale-slider", "kind-select", "use-injection"]) {
    (el(id) as HTMLButtonElement | HTMLInputElement).toggleAttribute("disabled", !enabled);
  }
}

function syncFormInputs(): void {
  el<HTMLSelectElement>("kind-select").value = state.form.kind;
  el<HTMLInputElement>("swap-index").value = String(state.form.index);
  el<HTMLInputElement>("swap-word").value = state.form.word;
  el<HTMLInputElement>("phrase-text").value = state.form.phrase;
  el<HTMLInputElement>("phrase-pos").value = String(state.form.position);
  el<HTMLInputElement>("scale-slider").value = String(state.form.scale);
  el<HTMLSpanElement>("scale-value").textContent = state.form.scale.toFixed(2);
  el<HTMLInputElement>("use-injection").checked = state.form.useInjection;
  for (const kind of ["word_swap", "add_phrase", "reweight"]) {
    el(`group-${kind}`).hidden = kind !== state.form.kind;
  }
}

function acceptPayload(payload: SessionPayload): void {
  lastPayload = payload;
  state = applyServerPayload(state, payload);
  verifyIntegrity();
  renderTokens();
  renderImage();
  renderRewards();
  renderStatus();
  syncControls();
}

function setBusy(busy: boolean): void {
  state = { ...state, busy };
  syncControls();
}

async function startSession(): Promise<void> {
  const input = el<HTMLInputElement>("prompt-input");
  const text = input.value.trim();
  const validation = el<HTMLSpanElement>("prompt-validation");
  if (!text) {
    validation.textContent = "prompt must not be empty";
    return;
  }
  validation.textContent = "";
  const seed = Number(el<HTMLInputElement>("seed-input").value) || 0;
  setBusy(true);
  try {
    const payload = await client.createSession(text, seed);
    heatmapToken = null;
    acceptPayload(payload);
    el<HTMLDivElement>("workspace").hidden = false;
    setError(null);
  } catch (err) {
    if (err instanceof ApiError) {
      validation.textContent = err.message;
    } else {
      setError("cannot reach the session service", startSession);
    }
  } finally {
    setBusy(false);
  }
}

async function submitEdit(): Promise<void> {
  if (!state.sessionId) return;
  const validation = el<HTMLSpanElement>("edit-validation");
  const result = editFromForm(state.form, state.tokens.length);
  if (!result.ok) {
    validation.textContent = result.reason;
    return;
  }
  validation.textContent = "";
  setBusy(true);
  try {
    const payload = await client.submitEdit(state.sessionId, result.edit, state.form.useInjection);
    acceptPayload(payload);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      state = { ...state, status: state.status };
      await refresh();
    } else if (err instanceof ApiError) {
      validation.textContent = err.message;
    } else {
      setError("cannot reach the session service", submitEdit);
    }
  } finally {
    setBusy(false);
  }
}

async function refresh(): Promise<void> {
  if (!state.sessionId) return;
  try {
    acceptPayload(await client.getSession(state.sessionId));
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      el<HTMLDivElement>("workspace").hidden = true;
      setError("session expired; start a new one");
      state = initialViewState();
    }
  }
}

async function showSuggestions(): Promise<void> {
  if (!state.sessionId) return;
  const holder = el<HTMLDivElement>("suggestions");
  try {
    const data = await client.suggestions(state.sessionId);
    state = { ...state, suggestions: data };
    holder.innerHTML = "";
    const byStrategy = new Map(data.candidates.map((c) => [c.strategy, c]));
    for (const strategy of ["word_swap", "add_phrase", "reweight"]) {
      const card = document.createElement("div");
      card.className = "card";
      const prob = data.probabilities[strategy] ?? 0;
      const candidate = byStrategy.get(strategy);
      card.innerHTML = `<strong>${strategy.replace("_", " ")}</strong>` +
        `<span class="prob">${formatProbability(prob)}</span>` +
        `<p>${candidate ? candidate.feedback : "no candidate this round"}</p>`;
      if (candidate) {
        card.classList.add("clickable");
        card.onclick = () => {
          state = { ...state, form: prefillFromSuggestion(state.form, candidate) };
          syncFormInputs();
        };
      }
      holder.append(card);
    }
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      await refresh();
    } else {
      setError("cannot fetch suggestions", showSuggestions);
    }
  }
}

async function acceptImage(): Promise<void> {
  if (!state.sessionId) return;
  setBusy(true);
  try {
    acceptPayload(await client.accept(state.sessionId));
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      await refresh();
    } else if (!(err instanceof ApiError)) {
      setError("cannot reach the session service", acceptImage);
    }
  } finally {
    setBusy(false);
  }
}

function wireForm(): void {
  el<HTMLSelectElement>("kind-select").onchange = (ev) => {
    const kind = (ev.target as HTMLSelectElement).value as ViewState["form"]["kind"];
    state = { ...state, form: { ...state.form, kind } };
    syncFormInputs();
  };
  el<HTMLInputElement>("swap-index").oninput = (ev) => {
    state = { ...state, form: { ...state.form, index: Number((ev.target as HTMLInputElement).value) } };
  };
  el<HTMLInputElement>("swap-word").oninput = (ev) => {
    state = { ...state, form: { ...state.form, word: (ev.target as HTMLInputElement).value } };
  };
  el<HTMLInputElement>("phrase-text").oninput = (ev) => {
    state = { ...state, form: { ...state.form, phrase: (ev.target as HTMLInputElement).value } };
  };
  el<HTMLInputElement>("phrase-pos").oninput = (ev) => {
    state = { ...state, form: { ...state.form, position: Number((ev.target as HTMLInputElement).value) } };
  };
  el<HTMLInputElement>("scale-slider").oninput = (ev) => {
    const value = clampScale(Number((ev.target as HTMLInputElement).value));
    state = { ...state, form: { ...state.form, scale: value } };
    el<HTMLSpanElement>("scale-value").textContent = value.toFixed(2);
  };
  el<HTMLInputElement>("use-injection").onchange = (ev) => {
    state = { ...state, form: { ...state.form, useInjection: (ev.target as HTMLInputElement).checked } };
  };
}

function init(): void {
  el<HTMLButtonElement>("start-btn").onclick = startSession;
  el<HTMLInputElement>("prompt-input").onkeydown = (ev) => {
    if (ev.key === "Enter") startSession();
  };
  el<HTMLButtonElement>("apply-edit").onclick = submitEdit;
  el<HTMLButtonElement>("suggest-btn").onclick = showSuggestions;
  el<HTMLButtonElement>("accept-btn").onclick = acceptImage;
  wireForm();
  syncFormInputs();
  syncControls();
}

init();
