// Typed client over the session HTTP API. No other backend is consumed.

export interface ImagePayload {
  h: number;
  w: number;
  c: number;
  data: number[];
}

export interface AttentionPayload {
  tokens: string[];
  heatmaps: number[][];
}

export interface PromptEntry {
  surface: string;
  weight: number;
}

export interface SessionPayload {
  id: string;
  round: number;
  status: string;
  clip_score: number;
  reward_history: number[];
  prompt: PromptEntry[];
  image: ImagePayload;
  image_png: string;
  attention: AttentionPayload;
}

export type EditSpec =
  | { type: "word_swap"; index: number; new: string }
  | { type: "add_phrase"; position: number; words: string[] }
  | { type: "reweight"; index: number; scale: number };

export interface SuggestionCandidate {
  strategy: string;
  edit: EditSpec;
  feedback: string;
}

export interface Suggestions {
  probabilities: Record<string, number>;
  candidates: SuggestionCandidate[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parseDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return resp.statusText;
  }
}

export class Client {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, await parseDetail(resp));
    }
    return (await resp.json()) as T;
  }

  createSession(prompt: string, seed = 0, target?: string): Promise<SessionPayload> {
    return this.request("/api/sessions", {
      method: "POST",
      body: JSON.stringify(target ? { prompt, seed, target } : { prompt, seed }),
    });
  }

  getSession(id: string): Promise<SessionPayload> {
    return this.request(`/api/sessions/${id}`);
  }

  submitEdit(id: string, edit: EditSpec, useInjection = true): Promise<SessionPayload> {
    return this.request(`/api/sessions/${id}/edits`, {
      method: "POST",
      body: JSON.stringify({ edit, use_injection: useInjection }),
    });
  }

  suggestions(id: string): Promise<Suggestions> {
    return this.request(`/api/sessions/${id}/suggestions`);
  }

  accept(id: string): Promise<SessionPayload> {
    return this.request(`/api/sessions/${id}/accept`, { method: "POST" });
  }
}
