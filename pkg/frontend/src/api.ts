// Thin typed client for the review API. The console never computes a
// score or severity itself; everything numeric comes from these calls.

import type {
  DecisionRecord,
  ReviewItem,
  RunReport,
  RunSummary,
  ScorePreview,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}`);
  }
}

export class AlreadyDecidedError extends Error {
  constructor(public prior: DecisionRecord) {
    super('item already decided');
  }
}

export interface DecisionRequest {
  kind: 'accept' | 'override' | 'approve' | 'reject';
  vector?: string;
  analyst: string;
}

export class ApiClient {
  constructor(
    public baseUrl: string,
    public analyst: string = 'console',
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        'Content-Type': 'application/json',
        'X-Analyst': this.analyst,
        ...(init?.headers ?? {}),
      },
    });
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = (await response.json()).detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async listRuns(): Promise<RunSummary[]> {
    const payload = await this.request<{ runs: RunSummary[] }>('/runs');
    return payload.runs;
  }

  getReport(runId: string): Promise<RunReport> {
    return this.request(`/runs/${runId}/report`);
  }

  async pending(): Promise<ReviewItem[]> {
    const payload = await this.request<{ items: ReviewItem[] }>('/review/pending');
    return payload.items;
  }

  getItem(itemId: string): Promise<ReviewItem> {
    return this.request(`/review/${itemId}`);
  }

  score(vector: string): Promise<ScorePreview> {
    return this.request(`/score/${vector}`);
  }

  async decide(itemId: string, decision: DecisionRequest): Promise<ReviewItem> {
    try {
      return await this.request<ReviewItem>(`/review/${itemId}/decision`, {
        method: 'POST',
        body: JSON.stringify({ ...decision, analyst: this.analyst }),
      });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        const detail = error.detail as { prior_decision: DecisionRecord };
        throw new AlreadyDecidedError(detail.prior_decision);
      }
      throw error;
    }
  }
}
