import { describe, expect, it } from "vitest";

import { ApiClient, type FetchLike } from "../src/api.js";
import { VerdictOutbox } from "../src/retry.js";
import { ReviewState } from "../src/state.js";
import type { PatternItem } from "../src/types.js";

/** In-memory stand-in for the service's verdict endpoint: append-only audit
 * with idempotent identical resubmissions, mirroring the server contract. */
class FakeServer {
  audit: Array<{ pattern_id: string; verdict: string }> = [];
  failNextPosts = 0;

  fetch: FetchLike = async (input, init) => {
    if (init?.method === "POST") {
      if (this.failNextPosts > 0) {
        this.failNextPosts -= 1;
        throw new TypeError("network down");
      }
      const body = JSON.parse(String(init.body));
      const patternId = String(input).split("/")[2];
      const latest = [...this.audit].reverse().find((r) => r.pattern_id === patternId);
      const appended = !latest || latest.verdict !== body.verdict;
      if (appended) {
        this.audit.push({ pattern_id: patternId, verdict: body.verdict });
      }
      return new Response(
        JSON.stringify({
          pattern_id: patternId,
          run_id: body.run_id,
          rater: "expert",
          verdict: body.verdict,
          appended,
        }),
        { status: 200, headers: { "Content-Type": "application/json" } },
      );
    }
    return new Response("[]", { status: 200 });
  };
}

function outboxWith(server: FakeServer): VerdictOutbox {
  return new VerdictOutbox(new ApiClient("", server.fetch));
}

describe("verdict outbox", () => {
  it("delivers a verdict exactly once after offline retries", async () => {
    const server = new FakeServer();
    server.failNextPosts = 3;
    const outbox = outboxWith(server);
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "valid" });

    expect(await outbox.flush()).toBe(0); // offline
    expect(outbox.pending).toBe(1);
    expect(await outbox.flush()).toBe(0);
    expect(await outbox.flush()).toBe(0);
    expect(await outbox.flush()).toBe(1); // back online
    expect(outbox.pending).toBe(0);

    // extra flushes post nothing new
    expect(await outbox.flush()).toBe(0);
    expect(server.audit).toEqual([{ pattern_id: "p1", verdict: "valid" }]);
  });

  it("a newer verdict for the same pattern replaces the queued one", async () => {
    const server = new FakeServer();
    server.failNextPosts = 1;
    const outbox = outboxWith(server);
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "valid" });
    await outbox.flush(); // fails, stays queued
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "invalid" });
    expect(outbox.pending).toBe(1);
    await outbox.flush();
    expect(server.audit).toEqual([{ pattern_id: "p1", verdict: "invalid" }]);
  });

  it("identical resubmission is acknowledged without a new audit entry", async () => {
    const server = new FakeServer();
    const outbox = outboxWith(server);
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "valid" });
    await outbox.flush();
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "valid" });
    await outbox.flush();
    expect(server.audit.length).toBe(1);
    expect(outbox.delivered.map((r) => r.appended)).toEqual([true, false]);
  });

  it("flushes multiple distinct patterns independently", async () => {
    const server = new FakeServer();
    const outbox = outboxWith(server);
    outbox.enqueue({ patternId: "p1", runId: "r1", verdict: "valid" });
    outbox.enqueue({ patternId: "p2", runId: "r1", verdict: "invalid" });
    expect(await outbox.flush()).toBe(2);
    expect(server.audit.map((r) => r.pattern_id).sort()).toEqual(["p1", "p2"]);
  });
});

function item(id: string): PatternItem {
  return {
    id,
    text: `pattern ${id}`,
    stage: "H",
    prompt_level: "detailed",
    model_id: "gpt4o",
    frequency_class: "high",
    expert_verdict: null,
    literature_verdict: "valid",
  };
}

describe("review state", () => {
  it("advances through the queue with optimistic verdicts", () => {
    const state = new ReviewState();
    state.load([item("a"), item("b"), item("c")]);
    expect(state.remaining()).toBe(3);
    const first = state.applyVerdict("valid");
    expect(first?.id).toBe("a");
    expect(first?.expert_verdict).toBe("valid");
    expect(state.remaining()).toBe(2);
    expect(state.current()?.id).toBe("b");
  });

  it("reconciles with the server copy winning", () => {
    const state = new ReviewState();
    state.load([item("a")]);
    state.applyVerdict("valid");
    const corrected = state.reconcile({
      pattern_id: "a",
      run_id: "r1",
      rater: "expert",
      verdict: "invalid", // server already had a conflicting verdict
      appended: false,
    });
    expect(corrected).toBe(true);
    expect(state.items[0].expert_verdict).toBe("invalid");
  });

  it("returns null when the queue is exhausted", () => {
    const state = new ReviewState();
    state.load([item("a")]);
    state.applyVerdict("invalid");
    expect(state.current()).toBeNull();
    expect(state.applyVerdict("valid")).toBeNull();
  });
});
