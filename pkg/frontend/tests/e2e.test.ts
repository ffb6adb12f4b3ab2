// End-to-end acceptance for the chat client: a scripted session driven
// through the DOM advances the stage badge 1 -> 5 strictly forward, renders
// a visual-aid attachment, and downloads a summary whose structured sidecar
// parses back to the verified profile.
//
// By default the test replays payloads recorded from the real service.
// Set INTEGRATION_BASE_URL to a running counsel-service to drive the same
// script live over HTTP.

import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionViewModel } from "../src/session.js";
import { ChatUi } from "../src/ui.js";
import type { SummaryRecord } from "../src/types.js";
import { makeReplayFetch, recorded } from "./replayServer.js";

const INTEGRATION_BASE_URL = process.env.INTEGRATION_BASE_URL ?? "";

function mount(api: ApiClient) {
  const vm = new SessionViewModel(api);
  const ui = new ChatUi(vm, api);
  const root = document.createElement("div");
  document.body.replaceChildren(root);
  ui.mount(root);
  return { vm, root };
}

function badgeText(root: HTMLElement): string {
  return root.querySelector('[data-testid="stage-badge"]')!.textContent ?? "";
}

async function typeAndSend(root: HTMLElement, text: string): Promise<void> {
  const input = root.querySelector(".composer input") as HTMLInputElement;
  const form = root.querySelector("form.composer") as HTMLFormElement;
  const before = root.querySelectorAll(".message").length;
  input.value = text;
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
  await vi.waitFor(() => {
    const now = document.body.querySelectorAll(".message").length;
    if (now < before + 2) throw new Error("reply not rendered yet");
  });
}

async function driveScriptedSession(api: ApiClient, script: string[]) {
  const { vm, root } = mount(api);
  await vm.startSession();

  const badges: number[] = [parseInt(badgeText(root), 10)];
  for (const line of script) {
    await typeAndSend(document.body, line);
    badges.push(parseInt(badgeText(document.body), 10));
  }

  // Strictly forward: never a decrease, and all five stages were shown.
  for (let i = 1; i < badges.length; i++) {
    expect(badges[i]).toBeGreaterThanOrEqual(badges[i - 1]);
  }
  expect(new Set(badges)).toEqual(new Set([1, 2, 3, 4, 5]));
  expect(badges[badges.length - 1]).toBe(5);

  // A visual aid rendered from the recommendation turn.
  const img = document.body.querySelector(
    ".attachment.image img",
  ) as HTMLImageElement;
  expect(img).not.toBeNull();
  expect(img.getAttribute("alt")!.length).toBeGreaterThan(0);

  // Download is enabled now; the sidecar parses back to a verified profile.
  const button = document.body.querySelector(
    '[data-testid="download-summary"]',
  ) as HTMLButtonElement;
  expect(button.disabled).toBe(false);

  const objectUrls: string[] = [];
  (URL as unknown as Record<string, unknown>).createObjectURL = (blob: Blob) => {
    objectUrls.push(`blob:${blob.size}`);
    return `blob:mock-${objectUrls.length}`;
  };
  (URL as unknown as Record<string, unknown>).revokeObjectURL = () => {};

  const record = (await vm.downloadSummary()) as SummaryRecord;
  expect(record).not.toBeNull();
  expect(record.schema_version).toBe(1);
  expect(record.profile.verified).toBe(true);
  expect(record.profile.verified_at).toBeTruthy();
  expect(record.profile.intent).toBe("prevent_pregnancy");
  expect(Object.values(record.profile.conditions)).toContain("no");
  expect(record.recommendation).toHaveProperty("ranked");
  expect(objectUrls.length).toBe(1); // the text file was actually saved
  return record;
}

describe("chat client end to end", () => {
  it("replayed session: badge 1->5, visual aid, verified summary sidecar", async () => {
    const { fetch } = makeReplayFetch();
    const api = new ApiClient("", fetch);
    const record = await driveScriptedSession(
      api,
      recorded.turns.map((t) => t.send),
    );
    // With the replay transport the sidecar must equal the recorded one.
    expect(record).toEqual(recorded.summary_record);
  });

  it.runIf(INTEGRATION_BASE_URL)(
    "live session against a running service",
    async () => {
      const api = new ApiClient(INTEGRATION_BASE_URL);
      await driveScriptedSession(
        api,
        recorded.turns.map((t) => t.send),
      );
    },
  );
});
