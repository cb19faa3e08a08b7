// Role views as pure functions of the feed document.
//
// Contract: the page is a rendering of the feed, nothing else. Every number
// shown comes from `values` via fmt() (byte-equal to the served JSON), and
// suppressed aggregates render as a withheld badge, never as stale data.

import { barRow, lineChart } from "./charts.js";
import { escapeHtml, fmt, windowText } from "./render-util.js";
import {
  FeedDocument,
  FeedRow,
  FeedbackNote,
  MetricRow,
  isSuppressed,
} from "./types.js";

const METRIC_TITLES: Record<string, string> = {
  session_engagement: "Session engagement",
  vera_strategy: "Modeling strategy",
  adoption_rate_by_cohort: "Tool adoption by cohort",
  score_trajectory: "Score trajectory",
  question_complexity_trend: "Question complexity trend",
  trait_adoption_correlation: "Trait ↔ adoption correlation",
  feedback_count: "Instructor feedback activity",
};

function title(metricId: string): string {
  return METRIC_TITLES[metricId] ?? metricId;
}

function aggregates(feed: FeedDocument): FeedRow[] {
  return feed.results.filter((r) => !("actor" in r && r.actor !== undefined));
}

function actorRows(feed: FeedDocument): MetricRow[] {
  return feed.results.filter(
    (r): r is MetricRow => !isSuppressed(r) && r.actor !== undefined
  );
}

/** Last occurrence wins: results arrive in append order, newest last. */
function latestBy<T>(rows: T[], key: (row: T) => string): T[] {
  const seen = new Map<string, T>();
  for (const row of rows) seen.set(key(row), row);
  return [...seen.values()];
}

export function metricCard(row: FeedRow): string {
  if (isSuppressed(row)) {
    return (
      `<article class="card suppressed" data-metric="${row.metric_id}">` +
      `<h3>${title(row.metric_id)}</h3>` +
      `<span class="badge withheld">n&lt;5 withheld</span>` +
      `<footer>${windowText(row.window)}</footer></article>`
    );
  }
  const entries = Object.entries(row.values)
    .filter(([k]) => k !== "n" && !k.startsWith("week_") && !k.startsWith("tool_"))
    .map(([k, v]) => `<dt>${k}</dt><dd class="value">${fmt(v)}</dd>`)
    .join("");
  return (
    `<article class="card" data-metric="${row.metric_id}">` +
    `<h3>${title(row.metric_id)} · ${escapeHtml(row.cohort.bucket)}</h3>` +
    `<dl>${entries}</dl>` +
    `<footer>n=${fmt(row.values.n)} · ${windowText(row.window)}</footer>` +
    `</article>`
  );
}

export function complexityChart(feed: FeedDocument): string {
  const rows = feed.results.filter(
    (r): r is MetricRow =>
      !isSuppressed(r) && r.metric_id === "question_complexity_trend"
  );
  if (rows.length === 0) return "";
  const latest = rows[rows.length - 1];
  const points = Object.entries(latest.values)
    .filter(([k]) => k.startsWith("week_"))
    .map(([k, v]) => ({ x: Number(k.slice(5)), y: v, label: fmt(v) }))
    .sort((a, b) => a.x - b.x);
  const slope = latest.values.slope;
  const intercept = latest.values.intercept;
  const caption =
    slope !== undefined
      ? `<p>slope <span class="value">${fmt(slope)}</span> per week` +
        (intercept !== undefined
          ? ` from <span class="value">${fmt(intercept)}</span>`
          : "") +
        ` · n=${fmt(latest.values.n)}</p>`
      : "";
  return (
    `<section class="trend"><h3>${title(latest.metric_id)}</h3>` +
    lineChart(points, { title: "higher-order fraction per week" }) +
    caption +
    `</section>`
  );
}

function engagementTable(rows: MetricRow[]): string {
  const columns = ["sessions", "questions_asked", "answers_given",
    "comments", "likes_received", "interaction_count"];
  const body = rows
    .map((r) =>
      `<tr><td class="pseudonym">${escapeHtml(r.actor ?? "")}</td>` +
      columns.map((c) => `<td class="value">${fmt(r.values[c] ?? 0)}</td>`).join("") +
      `</tr>`
    )
    .join("");
  return (
    `<table class="drill" data-metric="session_engagement">` +
    `<thead><tr><th>student</th>${columns.map((c) => `<th>${c}</th>`).join("")}</tr></thead>` +
    `<tbody>${body}</tbody></table>`
  );
}

function trajectoryTable(rows: MetricRow[]): string {
  const body = rows
    .map(
      (r) =>
        `<tr><td class="pseudonym">${escapeHtml(r.actor ?? "")}</td>` +
        `<td class="value">${fmt(r.values.slope)}</td>` +
        `<td class="value">${fmt(r.values.intercept)}</td>` +
        `<td class="value">${fmt(r.values.n)}</td>` +
        `<td>${trendArrow(r.values.slope)}</td></tr>`
    )
    .join("");
  return (
    `<table class="drill" data-metric="score_trajectory">` +
    `<thead><tr><th>student</th><th>slope (pts/day)</th><th>intercept</th>` +
    `<th>n</th><th>trend</th></tr></thead><tbody>${body}</tbody></table>`
  );
}

export function trendArrow(slope: number): string {
  if (slope > 0) return `<span class="trend-up" title="improving">▲</span>`;
  if (slope < 0) return `<span class="trend-down" title="declining">▼</span>`;
  return `<span class="trend-flat" title="flat">►</span>`;
}

const STRATEGY_LABELS: Array<[string, string]> = [
  ["label_systematic_search", "systematic search"],
  ["label_decomposition", "decomposition"],
  ["label_global_local", "global → local"],
];

function strategyName(row: MetricRow): string {
  for (const [key, name] of STRATEGY_LABELS) {
    if (row.values[key] === 1) return name;
  }
  return "unlabeled";
}

function strategyTable(rows: MetricRow[]): string {
  if (rows.length === 0) return "";
  const body = rows
    .map(
      (r) =>
        `<tr><td class="pseudonym">${escapeHtml(r.actor ?? "")}</td>` +
        `<td>${strategyName(r)}</td>` +
        `<td class="value">${fmt(r.values.n)}</td></tr>`
    )
    .join("");
  return (
    `<h3>Modeling strategies</h3>` +
    `<table class="drill" data-metric="vera_strategy">` +
    `<thead><tr><th>student</th><th>strategy</th><th>edits</th></tr></thead>` +
    `<tbody>${body}</tbody></table>`
  );
}

function drilldown(feed: FeedDocument): string {
  const engagement = latestBy(
    actorRows(feed).filter((r) => r.metric_id === "session_engagement"),
    (r) => `${r.actor}|${Object.keys(r.values).find((k) => k.startsWith("tool_")) ?? ""}`
  );
  const trajectories = latestBy(
    actorRows(feed).filter((r) => r.metric_id === "score_trajectory"),
    (r) => r.actor ?? ""
  );
  const strategies = latestBy(
    actorRows(feed).filter((r) => r.metric_id === "vera_strategy"),
    (r) => `${r.actor}|${r.provenance.offset_lo}|${r.values.n}`
  );
  return (
    `<section class="drilldown"><h3>Per-student engagement</h3>` +
    engagementTable(engagement) +
    `<h3>Per-student trajectories</h3>` +
    trajectoryTable(trajectories) +
    strategyTable(strategies) +
    `</section>`
  );
}

export function feedbackThread(notes: FeedbackNote[]): string {
  if (notes.length === 0) {
    return `<p class="empty-thread">No instructor notes yet.</p>`;
  }
  const items = notes
    .map(
      (n) =>
        `<li class="note" data-note="${escapeHtml(n.note_id)}">` +
        `<blockquote>${escapeHtml(n.text)}</blockquote>` +
        `<footer>${escapeHtml(n.author)} · ${escapeHtml(n.created_at)} · ` +
        `<span class="insight-ref">${escapeHtml(n.insight)}</span></footer></li>`
    )
    .join("");
  return `<ul class="feedback-thread">${items}</ul>`;
}

export function feedbackComposer(feed: FeedDocument): string {
  const insights = latestBy(
    aggregates(feed).filter((r): r is MetricRow => !isSuppressed(r)),
    (r) => `${r.metric_id}|${r.cohort.dimension}|${r.cohort.bucket}`
  );
  const options = insights
    .map((r) => {
      const ref = JSON.stringify({
        metric_id: r.metric_id,
        window: r.window,
        cohort: r.cohort,
      });
      return `<option value="${escapeHtml(ref)}">${title(r.metric_id)} · ${escapeHtml(
        r.cohort.bucket
      )}</option>`;
    })
    .join("");
  return (
    `<form class="composer" data-course="${escapeHtml(feed.course)}">` +
    `<h3>Respond with a note</h3>` +
    `<select name="insight" required>${options}</select>` +
    `<textarea name="text" placeholder="What will you adjust?" required></textarea>` +
    `<button type="submit">Post note</button>` +
    `<p class="draft-state" hidden>Sending…</p></form>`
  );
}

export function renderTeacherView(feed: FeedDocument): string {
  const cards = aggregates(feed).map(metricCard).join("");
  return (
    header(feed) +
    `<section class="cards">${cards}</section>` +
    complexityChart(feed) +
    drilldown(feed) +
    `<section class="feedback">` +
    feedbackComposer(feed) +
    feedbackThread(feed.feedback) +
    `</section>`
  );
}

export function renderLearnerView(feed: FeedDocument): string {
  if (feed.results.length === 0) {
    return (
      header(feed) +
      `<section class="empty-state"><h3>Nothing here yet</h3>` +
      `<p>Your activity will appear once the next analytics pass runs.</p></section>`
    );
  }
  const mine = actorRows(feed);
  const engagement = latestBy(
    mine.filter((r) => r.metric_id === "session_engagement"),
    (r) => `${Object.keys(r.values).find((k) => k.startsWith("tool_")) ?? ""}`
  );
  const trajectory = mine.filter((r) => r.metric_id === "score_trajectory").pop();
  const engagementCards = engagement
    .map((r) => {
      const max = Math.max(r.values.interaction_count, 1);
      return (
        `<article class="card" data-metric="session_engagement">` +
        `<h3>Your engagement</h3>` +
        ["sessions", "questions_asked", "answers_given", "comments",
         "likes_received", "interaction_count"]
          .map((k) => barRow(k, r.values[k] ?? 0, max))
          .join("") +
        `<footer>n=${fmt(r.values.n)} · ${windowText(r.window)}</footer></article>`
      );
    })
    .join("");
  const trajectoryCard = trajectory
    ? `<article class="card" data-metric="score_trajectory"><h3>Your trajectory</h3>` +
      `<p>slope <span class="value">${fmt(trajectory.values.slope)}</span> pts/day ` +
      trendArrow(trajectory.values.slope) +
      ` from <span class="value">${fmt(trajectory.values.intercept)}</span>` +
      `</p><footer>n=${fmt(trajectory.values.n)} · ${windowText(trajectory.window)}</footer></article>`
    : "";
  const classCards = aggregates(feed).map(metricCard).join("");
  return (
    header(feed) +
    `<section class="cards">${engagementCards}${trajectoryCard}</section>` +
    `<section class="class-context"><h3>Class context</h3>${classCards}` +
    complexityChart(feed) +
    `</section>`
  );
}

export function renderResearcherView(feed: FeedDocument): string {
  const rows = feed.results.filter((r): r is MetricRow => !isSuppressed(r));
  const adoption = rows.filter((r) => r.metric_id === "adoption_rate_by_cohort");
  const adoptionTable =
    `<table class="cohort" data-metric="adoption_rate_by_cohort">` +
    `<thead><tr><th>bucket</th><th>rate</th><th>n</th><th>t</th><th>p</th></tr></thead><tbody>` +
    latestBy(adoption, (r) => r.cohort.bucket)
      .map(
        (r) =>
          `<tr><td>${escapeHtml(r.cohort.bucket)}</td>` +
          `<td class="value">${r.values.rate !== undefined ? fmt(r.values.rate) : "—"}</td>` +
          `<td class="value">${fmt(r.values.n)}</td>` +
          `<td class="value">${r.values.t !== undefined ? fmt(r.values.t) : "—"}</td>` +
          `<td class="value">${r.values.p !== undefined ? fmt(r.values.p) : "—"}</td></tr>`
      )
      .join("") +
    `</tbody></table>`;
  const traits = latestBy(
    rows.filter((r) => r.metric_id === "trait_adoption_correlation"),
    (r) => r.cohort.bucket
  );
  const traitTable =
    `<table class="cohort" data-metric="trait_adoption_correlation">` +
    `<thead><tr><th>instrument</th><th>r_pb</th><th>t</th><th>p</th><th>n</th>` +
    `<th>mean adopter</th><th>mean non</th></tr></thead><tbody>` +
    traits
      .map(
        (r) =>
          `<tr><td>${escapeHtml(r.cohort.bucket)}</td>` +
          ["r_pb", "t", "p", "n", "mean_adopter", "mean_non"]
            .map((k) =>
              `<td class="value">${r.values[k] !== undefined ? fmt(r.values[k]) : "—"}</td>`
            )
            .join("") +
          `</tr>`
      )
      .join("") +
    `</tbody></table>`;
  return (
    header(feed) +
    `<section class="cohorts"><h3>Adoption by cohort</h3>${adoptionTable}` +
    `<h3>Trait correlations</h3>${traitTable}</section>` +
    complexityChart(feed) +
    drilldown(feed) +
    `<p class="export"><a class="export-link" href="/v1/export" download>` +
    `Download full pseudonymized export</a></p>`
  );
}

export function renderRetryBanner(message: string): string {
  return (
    `<div class="banner error" role="alert">` +
    `<p>Feed unavailable: ${escapeHtml(message)}</p>` +
    `<button class="retry">Retry</button></div>`
  );
}

function header(feed: FeedDocument): string {
  return (
    `<header class="feed-header"><h2>${escapeHtml(feed.course)}</h2>` +
    `<p>${feed.role} view · ${windowText(feed.window)} · ` +
    `${feed.results.length} results · log offset ${feed.committed}</p></header>`
  );
}

export function renderView(feed: FeedDocument): string {
  switch (feed.role) {
    case "Teacher":
      return renderTeacherView(feed);
    case "Learner":
      return renderLearnerView(feed);
    case "Researcher":
      return renderResearcherView(feed);
  }
}
