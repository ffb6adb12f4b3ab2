// Payload shapes of the counseling service REST API. These mirror the
// server's documented response bodies exactly; the UI renders only what
// arrives in them.

export interface StageInfo {
  ordinal: number;
  name: string;
  label: string;
}

export interface AttachmentPayload {
  kind: string; // "image" | "document" | anything newer servers may add
  uri: string;
  caption: string;
}

export interface MessagePayload {
  session_id: string;
  turn_index: number;
  reply: string;
  stage: StageInfo;
  asked_slot_id: string | null;
  cited_entry_ids: string[];
  attachments: AttachmentPayload[];
  slots_updated: Record<string, unknown>;
  recommendation: Record<string, unknown> | null;
  session_complete: boolean;
  degraded?: boolean;
}

export interface SummaryRecord {
  schema_version: number;
  profile: {
    intent: string | null;
    gender: string | null;
    prior_experience: string[];
    experience_notes: string;
    preferences: Record<string, string>;
    conditions: Record<string, string>;
    verified: boolean;
    verified_at: string | null;
  };
  recommendation: Record<string, unknown>;
  citations: string[];
  generated_at: string;
  disclaimer: string;
}

export interface ApiError {
  code: string;
  detail: string;
}

export const STAGE_COUNT = 5;

export const STAGE_LABELS: ReadonlyArray<string> = [
  "Information Gathering",
  "Preference Screening",
  "Health Screening",
  "Recommendation",
  "Profile Verification",
];
