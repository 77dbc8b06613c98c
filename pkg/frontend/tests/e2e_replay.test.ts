/**
 * End-to-end replay check against the real Python service.
 *
 * A scripted session drives the SessionController through every query of a
 * three-round run, answering with the dataset's own labels. The resulting
 * server-side report must be identical to a dataset-oracle batch run with
 * the same seed, and the controller's indicators must match /api/status
 * after every accepted judgment.
 */

import { spawn, execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionController } from "../src/controller.js";

const PY = process.env.MORPHAL_PYTHON ?? "python3";
const PORT = 18731;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO = resolve(__dirname, "..", "..");

const CONFIG = {
  train: { encoder_hidden: [16], d_z: 2, epochs: 1, batch_size: 32, seed: 0 },
  schedule: { seed_frac: 0.04, step_frac: 0.01, cap_frac: 0.055 },
};

let work: string;
let server: ReturnType<typeof spawn> | null = null;
let labelById: Map<string, 0 | 1>;

function parseLabelsCsv(text: string): Map<string, 0 | 1> {
  const out = new Map<string, 0 | 1>();
  for (const line of text.trim().split("\n").slice(1)) {
    const [id, p] = line.split(",");
    out.set(id, Number(p) >= 0.5 ? 1 : 0);
  }
  return out;
}

async function waitForServer(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/status`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  work = mkdtempSync(join(tmpdir(), "morphal-e2e-"));
  const dataDir = join(work, "data");
  const cfgPath = join(work, "config.json");
  writeFileSync(cfgPath, JSON.stringify(CONFIG));

  execFileSync(PY, ["-m", "morphal.cli", "synth", "--n", "160",
    "--out", dataDir, "--seed", "3"], { cwd: REPO });
  execFileSync(PY, ["-m", "morphal.cli", "al-run",
    "--data", dataDir, "--labels", join(dataDir, "labels.csv"),
    "--strategy", "uncertainty", "--seed", "9",
    "--config", cfgPath, "--out", join(work, "expected")],
    { cwd: REPO });

  labelById = parseLabelsCsv(readFileSync(join(dataDir, "labels.csv"), "utf8"));

  server = spawn(PY, ["-m", "morphal.cli", "serve",
    "--data", dataDir, "--labels", join(dataDir, "labels.csv"),
    "--seed", "9", "--config", cfgPath,
    "--addr", "127.0.0.1", "--port", String(PORT)],
    { cwd: REPO, stdio: "ignore" });
  await waitForServer();
}, 120_000);

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(work, { recursive: true, force: true });
});

describe("scripted labeling session", () => {
  it("replays a 3-round run identically to the dataset oracle", async () => {
    const api = new ApiClient(BASE);
    const controller = new SessionController(api);

    let answered = 0;
    const deadline = Date.now() + 90_000;
    while (Date.now() < deadline) {
      await controller.refresh();
      const state = controller.state;
      expect(state.phase).not.toBe("unreachable");
      if (state.phase === "done") break;
      if (state.phase === "labeling" && state.query !== null) {
        const queryId = state.query.id;
        const label = labelById.get(queryId);
        expect(label).toBeDefined();
        const ok = await controller.submitJudgment(label!);
        expect(ok).toBe(true);
        answered += 1;
        // Indicators must mirror the service verbatim after every step.
        const status = await api.getStatus();
        expect(controller.state.status).toEqual(status);
      } else {
        await new Promise((r) => setTimeout(r, 100));
      }
    }

    expect(controller.state.phase).toBe("done");
    // 3 rounds at 128-image pool: quotas [5, 1, 1].
    expect(answered).toBe(7);

    const expectedCsv = readFileSync(join(work, "expected", "report.csv"),
      "utf8");
    const servedCsv = await api.getReportCsv();
    expect(servedCsv.replaceAll("\r\n", "\n"))
      .toBe(expectedCsv.replaceAll("\r\n", "\n"));

    const rounds = servedCsv.trim().split("\n").length - 1;
    expect(rounds).toBe(3);
  }, 120_000);
});
