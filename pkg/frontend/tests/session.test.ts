// View-model unit tests: forward-only stage badge, single in-flight post,
// error surfacing without duplication, and summary gating.

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionViewModel } from "../src/session.js";
import type { MessagePayload } from "../src/types.js";
import { makeReplayFetch, recorded } from "./replayServer.js";

function vmWith(fetchImpl: ReturnType<typeof makeReplayFetch>["fetch"]) {
  return new SessionViewModel(new ApiClient("", fetchImpl));
}

function payload(overrides: Partial<MessagePayload>): MessagePayload {
  return {
    session_id: "s",
    turn_index: 1,
    reply: "hello",
    stage: { ordinal: 1, name: "InfoGathering", label: "Information Gathering" },
    asked_slot_id: null,
    cited_entry_ids: [],
    attachments: [],
    slots_updated: {},
    recommendation: null,
    session_complete: false,
    ...overrides,
  };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status });
}

describe("SessionViewModel", () => {
  it("renders the recorded greeting on start", async () => {
    const { fetch } = makeReplayFetch();
    const vm = vmWith(fetch);
    const view = await vm.startSession();
    expect(view.sessionId).toBe(recorded.create.session_id);
    expect(view.messages).toHaveLength(1);
    expect(view.messages[0].role).toBe("assistant");
    expect(view.messages[0].text).toBe(recorded.create.reply);
    expect(view.stageOrdinal).toBe(1);
  });

  it("appends user and assistant text verbatim", async () => {
    const { fetch } = makeReplayFetch();
    const vm = vmWith(fetch);
    await vm.startSession();
    const view = await vm.sendMessage(recorded.turns[0].send);
    expect(view.messages).toHaveLength(3);
    expect(view.messages[1]).toMatchObject({
      role: "user",
      text: recorded.turns[0].send,
    });
    expect(view.messages[2]).toMatchObject({
      role: "assistant",
      text: recorded.turns[0].response.reply,
    });
  });

  it("never moves the stage badge backwards", async () => {
    const stages = [2, 3, 1, 3]; // a stale payload tries to go back to 1
    let call = 0;
    const vm = vmWith(async (url, init) => {
      if ((init?.method ?? "GET") === "POST" && url.endsWith("/sessions")) {
        return jsonResponse(payload({}), 201);
      }
      const ordinal = stages[Math.min(call, stages.length - 1)];
      call += 1;
      return jsonResponse(
        payload({ stage: { ordinal, name: `S${ordinal}`, label: `Stage ${ordinal}` } }),
      );
    });
    await vm.startSession();
    const seen: number[] = [];
    for (let i = 0; i < stages.length; i++) {
      const view = await vm.sendMessage(`m${i}`);
      seen.push(view.stageOrdinal);
    }
    expect(seen).toEqual([2, 3, 3, 3]);
  });

  it("allows only one in-flight post and never duplicates", async () => {
    let release: (value: Response) => void = () => {};
    let posts = 0;
    const vm = vmWith(async (url, init) => {
      if ((init?.method ?? "GET") === "POST" && url.endsWith("/sessions")) {
        return jsonResponse(payload({}), 201);
      }
      posts += 1;
      return new Promise<Response>((resolve) => {
        release = resolve;
      });
    });
    await vm.startSession();
    const first = vm.sendMessage("first");
    const second = await vm.sendMessage("second"); // dropped: still pending
    expect(second.pendingInput).toBe(true);
    expect(posts).toBe(1);
    release(jsonResponse(payload({ reply: "done" })));
    const settled = await first;
    expect(settled.pendingInput).toBe(false);
    expect(settled.messages.map((m) => m.text)).toContain("done");
    expect(settled.messages.map((m) => m.text)).not.toContain("second");
  });

  it("surfaces an outage banner and a retry sends exactly one copy", async () => {
    const { fetch } = makeReplayFetch({ failFirstMessageWith: 503 });
    const vm = vmWith(fetch);
    await vm.startSession();
    const failed = await vm.sendMessage(recorded.turns[0].send);
    expect(failed.errorBanner).toMatch(/temporarily unavailable/);
    expect(failed.messages).toHaveLength(1); // nothing appended on failure

    const retried = await vm.sendMessage(recorded.turns[0].send);
    expect(retried.errorBanner).toBeNull();
    const copies = retried.messages.filter(
      (m) => m.text === recorded.turns[0].send,
    );
    expect(copies).toHaveLength(1);
  });

  it("guides instead of downloading before verification", async () => {
    const { fetch, state } = makeReplayFetch();
    const vm = vmWith(fetch);
    await vm.startSession();
    const record = await vm.downloadSummary();
    expect(record).toBeNull();
    expect(vm.snapshot().errorBanner).toMatch(/after you confirm/);
    expect(state.summaryFetches).toBe(0);
  });

  it("downloads the sidecar once the session completes", async () => {
    const { fetch, state } = makeReplayFetch();
    const vm = vmWith(fetch);
    await vm.startSession();
    for (const turn of recorded.turns) {
      await vm.sendMessage(turn.send);
    }
    const view = vm.snapshot();
    expect(view.sessionComplete).toBe(true);
    expect(view.summaryAvailable).toBe(true);
    const record = await vm.downloadSummary();
    expect(record).not.toBeNull();
    expect(record!.profile.verified).toBe(true);
    expect(state.summaryFetches).toBeGreaterThan(0);
  });
});
