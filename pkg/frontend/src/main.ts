// Browser wiring: poll the feed, render the role view, handle the feedback
// composer with an optimistic draft state. Configuration comes from query
// parameters: ?api=<base-url>&token=<bearer>&course=<id>[&poll=<seconds>].

import { ApiClient, ApiError } from "./api.js";
import { renderRetryBanner, renderView } from "./render.js";
import type { FeedDocument, InsightRef, Role } from "./types.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "";
const token = params.get("token") ?? "";
const course = params.get("course") ?? "";
const pollSeconds = Number(params.get("poll") ?? "15");

const root = document.getElementById("app");

async function resolveRole(): Promise<Role> {
  // The feed names the caller's role; one probe fixes the client scope.
  const probe = new ApiClient(apiBase, token, "Learner");
  const feed = (await probe.dashboardFeed(course)) as FeedDocument;
  return feed.role;
}

function wireComposer(client: ApiClient): void {
  const form = root?.querySelector<HTMLFormElement>("form.composer");
  if (!form) return;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const insightField = form.querySelector<HTMLSelectElement>("select[name=insight]");
    const textField = form.querySelector<HTMLTextAreaElement>("textarea[name=text]");
    const draftState = form.querySelector<HTMLParagraphElement>(".draft-state");
    if (!insightField || !textField) return;
    const insight = JSON.parse(insightField.value) as InsightRef;
    if (draftState) draftState.hidden = false; // optimistic draft indicator
    try {
      await client.postFeedback({
        course,
        insight,
        text: textField.value,
      });
      textField.value = "";
      await refresh(client);
    } catch (error) {
      if (draftState) {
        draftState.hidden = false;
        draftState.textContent =
          error instanceof ApiError ? `Rejected: ${error.message}` : "Send failed";
      }
    }
  });
}

async function refresh(client: ApiClient): Promise<void> {
  if (!root) return;
  try {
    const feed = await client.dashboardFeed(course);
    root.innerHTML = renderView(feed);
    wireComposer(client);
  } catch (error) {
    // no stale silent data: replace the page with the retry banner
    const message = error instanceof ApiError
      ? `${error.status} ${error.message}`
      : String(error);
    root.innerHTML = renderRetryBanner(message);
    root.querySelector("button.retry")?.addEventListener("click", () => {
      void refresh(client);
    });
  }
}

async function start(): Promise<void> {
  if (!root) return;
  if (!apiBase || !token || !course) {
    root.innerHTML = renderRetryBanner(
      "missing ?api=, ?token=, or ?course= configuration"
    );
    return;
  }
  try {
    const role = await resolveRole();
    const client = new ApiClient(apiBase, token, role);
    await refresh(client);
    window.setInterval(() => void refresh(client), pollSeconds * 1000);
  } catch (error) {
    root.innerHTML = renderRetryBanner(String(error));
  }
}

void start();
