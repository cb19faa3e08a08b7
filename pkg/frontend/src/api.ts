// HTTP client scoped to a role's allowed endpoint set.
//
// The guard is structural: every request goes through one method that
// checks the path prefix against the role's allow-list, so a view simply
// cannot reach an endpoint its role is not entitled to.

import type { FeedDocument, FeedbackDraft, Role } from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string }
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown>; text(): Promise<string> }>;

const ROLE_ENDPOINTS: Record<Role, readonly string[]> = {
  Teacher: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics", "/v1/feedback"],
  Learner: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics"],
  Researcher: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics", "/v1/export"],
};

export class ScopeError extends Error {}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private role: Role,
    private fetchImpl: FetchLike = globalThis.fetch as unknown as FetchLike
  ) {}

  allowedPaths(): readonly string[] {
    return ROLE_ENDPOINTS[this.role];
  }

  exportUrl(): string {
    return `${this.baseUrl}/v1/export`;
  }

  private async request(path: string, init?: {
    method?: string; body?: string;
  }): Promise<unknown> {
    const bare = path.split("?")[0];
    if (!this.allowedPaths().includes(bare)) {
      throw new ScopeError(`${this.role} may not call ${bare}`);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: init?.method ?? "GET",
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(init?.body ? { "Content-Type": "application/json" } : {}),
      },
      body: init?.body,
    });
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return response.json();
  }

  async health(): Promise<{ status: string; committed: number }> {
    return (await this.request("/v1/health")) as { status: string; committed: number };
  }

  async dashboardFeed(course: string, from?: string, to?: string): Promise<FeedDocument> {
    const params = new URLSearchParams({ course });
    if (from) params.set("from", from);
    if (to) params.set("to", to);
    return (await this.request(`/v1/dashboard/feed?${params}`)) as FeedDocument;
  }

  async postFeedback(draft: FeedbackDraft): Promise<{ note_id: string }> {
    return (await this.request("/v1/feedback", {
      method: "POST",
      body: JSON.stringify(draft),
    })) as { note_id: string };
  }
}
