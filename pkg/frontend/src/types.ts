// Shapes of the documents served by the feed and feedback endpoints.
// The dashboard renders these verbatim; it never recomputes a metric.

export type Role = "Teacher" | "Learner" | "Researcher";

export interface Cohort {
  dimension: string;
  bucket: string;
}

export interface Window {
  from: string | null;
  to: string | null;
}

export interface MetricRow {
  metric_id: string;
  level: "micro" | "meso";
  cohort: Cohort;
  window: Window;
  values: Record<string, number>;
  provenance: { offset_lo: number; offset_hi: number; job_id: string };
  computed_at: string;
  actor?: string;
}

export interface SuppressedRow {
  metric_id: string;
  level: "micro" | "meso";
  cohort: Cohort;
  window: Window;
  suppressed: true;
  reason: string;
}

export type FeedRow = MetricRow | SuppressedRow;

export interface FeedbackNote {
  note_id: string;
  author: string;
  insight: string;
  text: string;
  created_at: string;
}

export interface FeedDocument {
  course: string;
  window: Window;
  role: Role;
  results: FeedRow[];
  feedback: FeedbackNote[];
  committed: number;
}

export interface InsightRef {
  metric_id: string;
  window: Window;
  cohort: Cohort;
}

// Body of POST /v1/feedback, exactly as the service expects it.
export interface FeedbackDraft {
  course: string;
  insight: InsightRef;
  text: string;
}

export function isSuppressed(row: FeedRow): row is SuppressedRow {
  return (row as SuppressedRow).suppressed === true;
}
