/** DOM wiring: polling loop, status panel, canvas, buttons, shortcuts. */

import { ApiClient } from "./api.js";
import { SessionController, UiSessionState } from "./controller.js";
import { clearCanvas, renderQuery } from "./render.js";

const POLL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmtAcc(value: number | null): string {
  return value === null ? "–" : `${(value * 100).toFixed(1)}%`;
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("query-canvas");
  const smoothBtn = el<HTMLButtonElement>("btn-smooth");
  const featuredBtn = el<HTMLButtonElement>("btn-featured");
  const banner = el<HTMLDivElement>("banner");
  const phaseLine = el<HTMLDivElement>("phase-line");

  const controller = new SessionController(new ApiClient(""));

  const render = (state: UiSessionState): void => {
    const status = state.status;
    el("stat-round").textContent = status ? String(status.round) : "–";
    el("stat-labeled").textContent = status ? String(status.labeled) : "–";
    el("stat-quota").textContent = status ? String(status.quota_remaining) : "–";
    el("stat-actions").textContent = status ? String(status.actions_spent) : "–";
    el("stat-val").textContent = status ? fmtAcc(status.last_val_acc) : "–";
    el("stat-test").textContent = status ? fmtAcc(status.last_test_acc) : "–";

    banner.hidden = state.phase !== "unreachable" && state.message === null;
    banner.textContent =
      state.phase === "unreachable"
        ? `cannot reach the labeling service${state.message ? `: ${state.message}` : ""}`
        : state.message ?? "";

    const canJudge = state.phase === "labeling" && state.query !== null
      && !state.submitting;
    smoothBtn.disabled = !canJudge;
    featuredBtn.disabled = !canJudge;

    switch (state.phase) {
      case "labeling":
        if (state.query !== null) {
          phaseLine.textContent =
            `is this galaxy smooth or featured? (image ${state.query.id})`;
          renderQuery(canvas, state.query);
        } else {
          phaseLine.textContent = "waiting for the next query…";
          clearCanvas(canvas, "queue empty");
        }
        break;
      case "training":
        phaseLine.textContent = "round complete: retraining the model…";
        clearCanvas(canvas, "training…");
        break;
      case "done":
        phaseLine.textContent = "run complete, thanks for labeling!";
        clearCanvas(canvas, "run complete");
        break;
      case "unreachable":
        phaseLine.textContent = "reconnecting…";
        break;
      default:
        phaseLine.textContent = "connecting…";
    }
  };

  controller.onChange(render);

  const judge = (label: 0 | 1): void => {
    void controller.submitJudgment(label);
  };
  smoothBtn.addEventListener("click", () => judge(0));
  featuredBtn.addEventListener("click", () => judge(1));
  document.addEventListener("keydown", (event) => {
    if (event.key === "1") judge(0);
    if (event.key === "2") judge(1);
  });

  clearCanvas(canvas, "connecting…");
  void controller.refresh();
  setInterval(() => void controller.refresh(), POLL_MS);
}

main();
