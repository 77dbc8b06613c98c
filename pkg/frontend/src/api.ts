/** Typed client for the labeling service's JSON API. */

export interface ServiceStatus {
  round: number;
  labeled: number;
  unlabeled: number;
  quota_remaining: number;
  actions_spent: number;
  last_val_acc: number | null;
  last_test_acc: number | null;
  awaiting_labels: boolean;
  done: boolean;
  training: boolean;
  error: string | null;
}

export interface QueryPayload {
  id: string;
  width: number;
  height: number;
  /** base64 of the raw 8-bit grayscale bytes, row-major */
  pixels: string;
}

export interface SubmitResult {
  status: number;
  accepted: boolean;
  quotaRemaining: number | null;
  detail: string | null;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async getStatus(): Promise<ServiceStatus> {
    const resp = await this.fetchFn(`${this.base}/api/status`);
    if (!resp.ok) throw new Error(`status endpoint returned ${resp.status}`);
    return (await resp.json()) as ServiceStatus;
  }

  /** Returns the pending queries, or null when no round is active (409). */
  async getQueries(limit: number): Promise<QueryPayload[] | null> {
    const resp = await this.fetchFn(`${this.base}/api/queries?limit=${limit}`);
    if (resp.status === 409) return null;
    if (!resp.ok) throw new Error(`queries endpoint returned ${resp.status}`);
    return (await resp.json()) as QueryPayload[];
  }

  async submitLabel(id: string, label: 0 | 1): Promise<SubmitResult> {
    const resp = await this.fetchFn(`${this.base}/api/labels`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id, label }),
    });
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    return {
      status: resp.status,
      accepted: resp.status === 200 && body["accepted"] === true,
      quotaRemaining:
        typeof body["quota_remaining"] === "number"
          ? (body["quota_remaining"] as number)
          : null,
      detail: typeof body["detail"] === "string" ? (body["detail"] as string) : null,
    };
  }

  async getReportCsv(): Promise<string> {
    const resp = await this.fetchFn(`${this.base}/api/report`);
    if (!resp.ok) throw new Error(`report endpoint returned ${resp.status}`);
    return await resp.text();
  }
}
