// View model for one counseling session. All message text and attachments
// come from API payloads verbatim; the model never invents content. The
// stage indicator is clamped to move forward only, and at most one post is
// in flight at a time.

import { ApiClient, ApiRequestError } from "./api.js";
import type {
  AttachmentPayload,
  MessagePayload,
  SummaryRecord,
} from "./types.js";

export interface UiMessage {
  role: "user" | "assistant";
  text: string;
  attachments: AttachmentPayload[];
  stageOrdinal: number;
}

export interface UiSessionView {
  sessionId: string | null;
  stageOrdinal: number;
  stageName: string;
  stageLabel: string;
  messages: UiMessage[];
  pendingInput: boolean;
  errorBanner: string | null;
  sessionComplete: boolean;
  summaryAvailable: boolean;
}

export type ViewListener = (view: UiSessionView) => void;

const SUMMARY_GUIDANCE =
  "The summary unlocks after you confirm your profile in the final stage.";

export class SessionViewModel {
  private view: UiSessionView = {
    sessionId: null,
    stageOrdinal: 1,
    stageName: "InfoGathering",
    stageLabel: "Information Gathering",
    messages: [],
    pendingInput: false,
    errorBanner: null,
    sessionComplete: false,
    summaryAvailable: false,
  };

  private listeners: ViewListener[] = [];

  constructor(private readonly api: ApiClient) {}

  snapshot(): UiSessionView {
    return {
      ...this.view,
      messages: this.view.messages.map((m) => ({ ...m })),
    };
  }

  subscribe(listener: ViewListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  private applyStage(payload: MessagePayload): void {
    // Forward-only indicator: a stale or replayed payload can never move
    // the badge backwards.
    if (payload.stage.ordinal >= this.view.stageOrdinal) {
      this.view.stageOrdinal = payload.stage.ordinal;
      this.view.stageName = payload.stage.name;
      this.view.stageLabel = payload.stage.label;
    }
  }

  private appendAssistant(payload: MessagePayload): void {
    this.view.messages.push({
      role: "assistant",
      text: payload.reply,
      attachments: payload.attachments.map((a) => ({ ...a })),
      stageOrdinal: payload.stage.ordinal,
    });
  }

  async startSession(): Promise<UiSessionView> {
    this.view.errorBanner = null;
    try {
      const payload = await this.api.createSession();
      this.view.sessionId = payload.session_id;
      this.applyStage(payload);
      this.appendAssistant(payload);
    } catch (error) {
      this.view.errorBanner = describe(error);
    }
    this.emit();
    return this.snapshot();
  }

  async sendMessage(text: string): Promise<UiSessionView> {
    if (this.view.pendingInput) {
      // Single in-flight post: drop the attempt, never auto-duplicate.
      return this.snapshot();
    }
    if (!this.view.sessionId || this.view.sessionComplete || !text.trim()) {
      return this.snapshot();
    }
    this.view.pendingInput = true;
    this.view.errorBanner = null;
    this.emit();
    try {
      const payload = await this.api.postMessage(this.view.sessionId, text);
      this.view.messages.push({
        role: "user",
        text,
        attachments: [],
        stageOrdinal: this.view.stageOrdinal,
      });
      this.applyStage(payload);
      this.appendAssistant(payload);
      if (payload.session_complete) {
        this.view.sessionComplete = true;
        this.view.summaryAvailable = true;
      }
    } catch (error) {
      // The message is not appended: the user sees the failure and decides
      // whether to resend, so a retry can never duplicate silently.
      this.view.errorBanner = describe(error);
    }
    this.view.pendingInput = false;
    this.emit();
    return this.snapshot();
  }

  async downloadSummary(): Promise<SummaryRecord | null> {
    if (!this.view.sessionId || !this.view.summaryAvailable) {
      this.view.errorBanner = SUMMARY_GUIDANCE;
      this.emit();
      return null;
    }
    try {
      const record = await this.api.getSummary(this.view.sessionId);
      const text = await this.api.getSummaryText(this.view.sessionId);
      saveTextFile(`counseling-summary-${this.view.sessionId}.txt`, text);
      return record;
    } catch (error) {
      this.view.errorBanner =
        error instanceof ApiRequestError && error.status === 409
          ? SUMMARY_GUIDANCE
          : describe(error);
      this.emit();
      return null;
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiRequestError) {
    if (error.status === 503) {
      return "The assistant is temporarily unavailable - nothing was lost; please send that again in a moment.";
    }
    if (error.code === "concurrent-post") {
      return "Still working on your previous message - one moment.";
    }
    return error.message;
  }
  return error instanceof Error ? error.message : String(error);
}

function saveTextFile(filename: string, contents: string): void {
  if (typeof document === "undefined") return;
  if (typeof URL.createObjectURL !== "function") return; // jsdom, SSR
  const blob = new Blob([contents], { type: "text/plain" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  document.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
