import type { ApiClient } from "./api.js";
import type { Verdict, VerdictResult } from "./types.js";

export interface PendingVerdict {
  patternId: string;
  runId: string;
  verdict: Verdict;
  note?: string;
}

/** Outbox for verdict posts that survives network failures.
 *
 * A verdict is enqueued once per pattern (a newer verdict for the same
 * pattern replaces the queued one) and flushed until the server accepts it.
 * Exactly-once delivery comes from the server's idempotent handling of an
 * identical body plus this queue never holding duplicates.
 */
export class VerdictOutbox {
  private queue: PendingVerdict[] = [];
  private results: VerdictResult[] = [];

  constructor(private readonly api: ApiClient) {}

  get pending(): number {
    return this.queue.length;
  }

  get delivered(): VerdictResult[] {
    return [...this.results];
  }

  enqueue(item: PendingVerdict): void {
    this.queue = this.queue.filter((q) => q.patternId !== item.patternId);
    this.queue.push(item);
  }

  /** Attempt delivery of everything queued; failed items stay queued.
   * Returns the number of verdicts the server accepted in this pass. */
  async flush(): Promise<number> {
    const still: PendingVerdict[] = [];
    let accepted = 0;
    for (const item of this.queue) {
      try {
        const result = await this.api.postVerdict(
          item.patternId,
          item.runId,
          item.verdict,
          item.note,
        );
        this.results.push(result);
        accepted += 1;
      } catch {
        still.push(item); // offline or server down: keep for the next flush
      }
    }
    this.queue = still;
    return accepted;
  }
}
