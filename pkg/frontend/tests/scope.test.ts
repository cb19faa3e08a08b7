// Role-scope contract: no view flow ever issues a request outside its
// role's allowed endpoint set (checked against a recording mock server).

import { describe, expect, it } from "vitest";

import { ApiClient, ScopeError, type FetchLike } from "../src/api.js";
import { renderView } from "../src/render.js";
import { learnerFeed, researcherFeed, teacherFeed } from "./fixtures.js";
import type { FeedDocument, Role } from "../src/types.js";

const ALLOWED: Record<Role, string[]> = {
  Teacher: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics", "/v1/feedback"],
  Learner: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics"],
  Researcher: ["/v1/health", "/v1/dashboard/feed", "/v1/metrics", "/v1/export"],
};

function recordingServer(feed: FeedDocument) {
  const paths: string[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    paths.push(new URL(url, "http://x").pathname);
    const path = new URL(url, "http://x").pathname;
    const body: unknown =
      path === "/v1/feedback" ? { note_id: "n" } :
      path === "/v1/health" ? { status: "ok", committed: 1 } : feed;
    return {
      ok: true,
      status: 200,
      json: async () => body,
      text: async () => JSON.stringify(body),
    };
  };
  return { paths, fetchImpl };
}

async function driveRoleFlow(role: Role, feed: FeedDocument, client: ApiClient) {
  // a full view lifecycle: health probe, feed fetch, render, role actions
  await client.health();
  const served = await client.dashboardFeed(feed.course);
  renderView(served);
  if (role === "Teacher") {
    await client.postFeedback({
      course: feed.course,
      insight: {
        metric_id: "adoption_rate_by_cohort",
        window: feed.window,
        cohort: { dimension: "generation", bucket: "gen-z" },
      },
      text: "note",
    });
  }
}

describe("role endpoint scope", () => {
  const cases: Array<[Role, () => FeedDocument]> = [
    ["Teacher", teacherFeed],
    ["Learner", learnerFeed],
    ["Researcher", researcherFeed],
  ];

  for (const [role, makeFeed] of cases) {
    it(`${role} flow stays inside its allowed set`, async () => {
      const feed = makeFeed();
      const { paths, fetchImpl } = recordingServer(feed);
      const client = new ApiClient("http://api", "tok", role, fetchImpl);
      await driveRoleFlow(role, feed, client);
      expect(paths.length).toBeGreaterThan(0);
      for (const path of paths) {
        expect(ALLOWED[role]).toContain(path);
      }
    });
  }

  it("learner client refuses to post feedback", async () => {
    const { paths, fetchImpl } = recordingServer(learnerFeed());
    const client = new ApiClient("http://api", "tok", "Learner", fetchImpl);
    await expect(
      client.postFeedback({
        course: "bio-1011",
        insight: {
          metric_id: "adoption_rate_by_cohort",
          window: { from: null, to: null },
          cohort: { dimension: "generation", bucket: "gen-z" },
        },
        text: "x",
      })
    ).rejects.toThrowError(ScopeError);
    expect(paths).toEqual([]); // blocked before any request left the client
  });

  it("teacher client exposes no export path", async () => {
    const client = new ApiClient("http://api", "tok", "Teacher");
    expect(client.allowedPaths()).not.toContain("/v1/export");
  });

  it("researcher view links to export without fetching it eagerly", async () => {
    const feed = researcherFeed();
    const { paths, fetchImpl } = recordingServer(feed);
    const client = new ApiClient("http://api", "tok", "Researcher", fetchImpl);
    await driveRoleFlow("Researcher", feed, client);
    expect(renderView(feed)).toContain('href="/v1/export"');
    expect(paths).not.toContain("/v1/export"); // download is user-initiated
  });
});
