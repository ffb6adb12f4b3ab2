// Thin typed client over the service's REST endpoints. fetch is injectable
// so tests can replay recorded server payloads without a network.

import type { MessagePayload, SummaryRecord } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiRequestError";
  }
}

async function asError(response: Response): Promise<ApiRequestError> {
  let code = "http-error";
  let detail = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; detail?: string };
    if (body.code) code = body.code;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the generic detail
  }
  return new ApiRequestError(response.status, code, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(): Promise<MessagePayload> {
    const response = await this.fetchImpl(this.url("/sessions"), {
      method: "POST",
    });
    if (!response.ok) throw await asError(response);
    return (await response.json()) as MessagePayload;
  }

  async postMessage(sessionId: string, text: string): Promise<MessagePayload> {
    const response = await this.fetchImpl(
      this.url(`/sessions/${sessionId}/messages`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
    if (!response.ok) throw await asError(response);
    return (await response.json()) as MessagePayload;
  }

  async getSummary(sessionId: string): Promise<SummaryRecord> {
    const response = await this.fetchImpl(
      this.url(`/sessions/${sessionId}/summary`),
    );
    if (!response.ok) throw await asError(response);
    return (await response.json()) as SummaryRecord;
  }

  async getSummaryText(sessionId: string): Promise<string> {
    const response = await this.fetchImpl(
      this.url(`/sessions/${sessionId}/summary?format=text`),
    );
    if (!response.ok) throw await asError(response);
    return await response.text();
  }

  assetUrl(uri: string): string {
    return uri.startsWith("http") ? uri : this.url(uri);
  }
}
