import type { PatternItem, Verdict, VerdictResult } from "./types.js";

/** Review queue state: pending items, a cursor, and optimistic verdicts that
 * reconcile against server responses (server copy wins). */
export class ReviewState {
  items: PatternItem[] = [];
  cursor = 0;
  optimistic = new Map<string, Verdict>();

  load(items: PatternItem[]): void {
    this.items = items;
    this.cursor = 0;
    this.optimistic.clear();
  }

  current(): PatternItem | null {
    return this.items[this.cursor] ?? null;
  }

  remaining(): number {
    return this.items.length - this.cursor;
  }

  /** Record a verdict locally and advance the queue. */
  applyVerdict(verdict: Verdict): PatternItem | null {
    const item = this.current();
    if (!item) {
      return null;
    }
    this.optimistic.set(item.id, verdict);
    item.expert_verdict = verdict;
    this.cursor += 1;
    return item;
  }

  /** Reconcile one server response; the server's copy wins on conflict.
   * Returns true when the optimistic value had to be corrected. */
  reconcile(result: VerdictResult): boolean {
    const local = this.optimistic.get(result.pattern_id);
    this.optimistic.delete(result.pattern_id);
    const item = this.items.find((p) => p.id === result.pattern_id);
    if (item && item.expert_verdict !== result.verdict) {
      item.expert_verdict = result.verdict;
    }
    return local !== undefined && local !== result.verdict;
  }
}
