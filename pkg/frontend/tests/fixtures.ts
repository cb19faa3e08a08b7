// Feed fixtures shaped exactly like the service's JSON output, including
// awkward shortest-round-trip float literals, so byte-equality is a real check.

import type { FeedDocument, MetricRow, SuppressedRow } from "../src/types.js";

const WINDOW = { from: "2025-09-01T08:00:00.000Z", to: "2025-11-10T08:00:00.000Z" };

function row(partial: Partial<MetricRow> & { metric_id: string; values: Record<string, number> }): MetricRow {
  return {
    level: "meso",
    cohort: { dimension: "course", bucket: "bio-1011" },
    window: WINDOW,
    provenance: { offset_lo: 0, offset_hi: 12961, job_id: "job" },
    computed_at: "2025-11-10T09:00:00.000Z",
    ...partial,
  } as MetricRow;
}

export const adoptionGenZ = row({
  metric_id: "adoption_rate_by_cohort",
  cohort: { dimension: "generation", bucket: "gen-z" },
  values: { rate: 0.69, n: 200, t: 5.961074276581663, p: 5.54401039483871e-9 },
});

export const adoptionPre = row({
  metric_id: "adoption_rate_by_cohort",
  cohort: { dimension: "generation", bucket: "pre-gen-z" },
  values: { rate: 0.405, n: 200, t: 5.961074276581663, p: 5.54401039483871e-9 },
});

export const nfc = row({
  metric_id: "trait_adoption_correlation",
  cohort: { dimension: "instrument", bucket: "NFC" },
  values: {
    r_pb: 0.43083381405918445, n: 300, t: 8.231955734241506,
    p: 4.742812938143e-15, mean_adopter: 4.69017094017094,
    mean_non: 3.9120879120879124,
  },
});

export const complexity = row({
  metric_id: "question_complexity_trend",
  values: {
    n: 1081, n_weeks: 10, slope: 0.04131313131313131,
    intercept: 0.19247474747474746,
    week_0: 0.2037037037037037, week_1: 0.22807017543859648,
    week_2: 0.3047619047619048, week_3: 0.3275862068965517,
    week_4: 0.3884297520661157, week_5: 0.4375,
    week_6: 0.4752475247524752, week_7: 0.5321100917431193,
    week_8: 0.5555555555555556, week_9: 0.6062091503267973,
  },
});

export const suppressed: SuppressedRow = {
  metric_id: "score_trajectory",
  level: "meso",
  cohort: { dimension: "course", bucket: "bio-1011" },
  window: WINDOW,
  suppressed: true,
  reason: "n<5 withheld",
};

export const selfEngagement = row({
  metric_id: "session_engagement",
  level: "micro",
  values: {
    sessions: 14, questions_asked: 9, answers_given: 2, comments: 3,
    likes_received: 1, interaction_count: 15, n: 15, tool_jill_watson: 1,
  },
  actor: "anon:gt:X8b3kd92mz0Qw1Vu5TyHgA",
});

export const selfTrajectory = row({
  metric_id: "score_trajectory",
  values: { slope: 0.5832712381712946, intercept: 74.91272727272727, n: 6 },
  actor: "anon:gt:X8b3kd92mz0Qw1Vu5TyHgA",
});

export const otherEngagement = row({
  metric_id: "session_engagement",
  level: "micro",
  values: {
    sessions: 4, questions_asked: 1, answers_given: 0, comments: 0,
    likes_received: 0, interaction_count: 5, n: 5, tool_sami: 1,
  },
  actor: "anon:gt:Qq0PLmN34abCdEfGh56iJk",
});

export function teacherFeed(): FeedDocument {
  return {
    course: "bio-1011",
    window: WINDOW,
    role: "Teacher",
    results: [adoptionGenZ, adoptionPre, nfc, complexity, suppressed,
              selfEngagement, otherEngagement, selfTrajectory],
    feedback: [{
      note_id: "0b7a2c1e-71aa-4a21-b1d0-2f3f7f8f9e10",
      author: "anon:gt:T3acHeRtoken1234567890",
      insight: "adoption_rate_by_cohort|2025-09-01T08:00:00.000Z|2025-11-10T08:00:00.000Z|generation|gen-z",
      text: "Adding a walkthrough for the low-adoption cohort.",
      created_at: "2025-11-09T15:30:00.000Z",
    }],
    committed: 12961,
  };
}

export function learnerFeed(): FeedDocument {
  return {
    course: "bio-1011",
    window: WINDOW,
    role: "Learner",
    results: [adoptionGenZ, suppressed, selfEngagement, selfTrajectory],
    feedback: [],
    committed: 12961,
  };
}

export function emptyLearnerFeed(): FeedDocument {
  return {
    course: "bio-1011",
    window: WINDOW,
    role: "Learner",
    results: [],
    feedback: [],
    committed: 0,
  };
}

export function researcherFeed(): FeedDocument {
  return {
    course: "bio-1011",
    window: WINDOW,
    role: "Researcher",
    results: [adoptionGenZ, adoptionPre, nfc, complexity,
              selfEngagement, otherEngagement, selfTrajectory],
    feedback: [],
    committed: 12961,
  };
}
