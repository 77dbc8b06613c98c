/** Session state machine: polls the service, holds the current query, and
 * guards submissions (one in flight, only for the rendered image). */

import { ApiClient, QueryPayload, ServiceStatus } from "./api.js";

export type Phase =
  | "connecting"
  | "labeling"
  | "training"
  | "done"
  | "unreachable";

export interface UiSessionState {
  phase: Phase;
  status: ServiceStatus | null;
  query: QueryPayload | null;
  submitting: boolean;
  message: string | null;
}

export class SessionController {
  state: UiSessionState = {
    phase: "connecting",
    status: null,
    query: null,
    submitting: false,
    message: null,
  };

  private listeners: Array<(s: UiSessionState) => void> = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: (s: UiSessionState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private set(partial: Partial<UiSessionState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  /** One poll cycle: refresh status and, when labeling, the next query.
   * Skipped while a submission is in flight. */
  async refresh(): Promise<void> {
    if (this.state.submitting) return;
    let status: ServiceStatus;
    try {
      status = await this.api.getStatus();
    } catch {
      this.set({ phase: "unreachable", message: "service unreachable" });
      return;
    }
    if (status.error) {
      this.set({ phase: "unreachable", status, message: status.error });
      return;
    }
    if (status.done) {
      this.set({ phase: "done", status, query: null, message: null });
      return;
    }
    if (!status.awaiting_labels) {
      this.set({ phase: "training", status, query: null, message: null });
      return;
    }
    // Keep the current query if it is still pending; otherwise pull one.
    if (this.state.query !== null) {
      this.set({ phase: "labeling", status });
      return;
    }
    const queries = await this.api.getQueries(1).catch(() => null);
    if (queries === null) {
      // 409 race: the round advanced between the two calls.
      this.set({ phase: "training", status, query: null });
      return;
    }
    this.set({
      phase: "labeling",
      status,
      query: queries.length > 0 ? queries[0] : null,
    });
  }

  /** Submit a judgment for the currently rendered query. */
  async submitJudgment(label: 0 | 1): Promise<boolean> {
    const query = this.state.query;
    if (query === null || this.state.submitting) return false;
    this.set({ submitting: true });
    try {
      const result = await this.api.submitLabel(query.id, label);
      if (result.status === 200) {
        this.set({ submitting: false, query: null, message: null });
        await this.refresh();
        return true;
      }
      if (result.status === 409) {
        // Conflict (answered elsewhere / training started): drop and resync.
        this.set({
          submitting: false,
          query: null,
          message: result.detail ?? "conflict",
        });
        await this.refresh();
        return false;
      }
      this.set({
        submitting: false,
        message: result.detail ?? `rejected (${result.status})`,
      });
      return false;
    } catch {
      this.set({
        submitting: false,
        phase: "unreachable",
        message: "service unreachable",
      });
      return false;
    }
  }
}
