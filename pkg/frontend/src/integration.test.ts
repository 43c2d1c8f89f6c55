// Round trip against the real session service: spawn it, drive one session
// through an edit and a threshold exit, assert timing and terminal behavior.
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, Client } from "./api";
import { clampScale } from "./state";

const PYTHON = process.env.COADAPT_PYTHON ?? "python3";
const PORT = 8765 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

const havePython = spawnSync(PYTHON, ["-c", "import coadapt"], { timeout: 60_000 }).status === 0;

let server: ChildProcess | null = null;

async function waitForHealth(timeoutMs: number): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/health`);
      if (resp.ok) return true;
    } catch {
      await new Promise((r) => setTimeout(r, 250));
    }
  }
  return false;
}

describe.skipIf(!havePython)("service round trip", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "coadapt-ui-"));
    // a low stop threshold lets one edit terminate the session
    const config = join(dir, "config.json");
    writeFileSync(config, JSON.stringify({ session: { tau_stop: -1.0 } }));
    server = spawn(
      PYTHON,
      ["-m", "coadapt.cli", "serve", "--port", String(PORT), "--config", config],
      { stdio: "ignore" }
    );
    expect(await waitForHealth(90_000)).toBe(true);
  }, 120_000);

  afterAll(() => {
    server?.kill();
  });

  it("creates a session, applies a re-weight, and sees the update within 2s", async () => {
    const client = new Client(BASE);
    const created = await client.createSession("a tranquil garden", 4);
    expect(created.round).toBe(0);
    expect(created.status).toBe("active");
    expect(created.image.data.length).toBe(32 * 32 * 3);

    const t0 = Date.now();
    const updated = await client.submitEdit(
      created.id,
      { type: "reweight", index: 1, scale: clampScale(1.5) },
      true
    );
    const elapsed = Date.now() - t0;
    expect(elapsed).toBeLessThan(2000);
    expect(updated.round).toBe(1);
    expect(updated.reward_history).toHaveLength(2);
    expect(updated.image.data.length).toBe(32 * 32 * 3);
  }, 30_000);

  it("identity re-weight keeps the image bit-identical", async () => {
    const client = new Client(BASE);
    const created = await client.createSession("a serene blue lake", 9);
    const updated = await client.submitEdit(created.id, { type: "reweight", index: 0, scale: 1 });
    expect(updated.image.data).toEqual(created.image.data);
    expect(updated.image_png).toBe(created.image_png);
  }, 30_000);

  it("terminal sessions reject further edits with 409", async () => {
    const client = new Client(BASE);
    const created = await client.createSession("golden desert", 2);
    const done = await client.submitEdit(created.id, { type: "reweight", index: 0, scale: 1 });
    expect(done.status).toBe("accepted_by_threshold"); // tau_stop = -1 in the test config
    const err = await client
      .submitEdit(created.id, { type: "reweight", index: 0, scale: 1 })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
  }, 30_000);

  it("suggestions expose three probabilities summing to one", async () => {
    const client = new Client(BASE);
    const created = await client.createSession("misty valley", 3);
    const data = await client.suggestions(created.id);
    const probs = Object.values(data.probabilities);
    expect(probs).toHaveLength(3);
    const total = probs.reduce((a, b) => a + b, 0);
    expect(Math.abs(total - 1)).toBeLessThan(1e-6);
  }, 30_000);
});
