/** Labeling session state machine, deliberately DOM-free.
 *
 * The session owns a local queue of fetched tasks. The front task is
 * the one on screen; typing accumulates into its entry. Submits are
 * optimistic: the queue advances immediately and the task parks in a
 * pending set until the server answers. Outcomes:
 *
 *   accepted        -> task leaves the session, labeled counter bumps
 *   server rejected -> task re-queues at the back, reason kept inline
 *   409 conflict    -> task is dropped with a notice (it moved on
 *                      without us; the server already has a label)
 *   transport error -> task returns to the front with its entry intact
 *
 * A task the server rejected goes back to "queued" on the server too,
 * so a later batch fetch may hand it to us again; refill() dedupes by
 * task_id against everything still held locally.
 */

import { ApiError, LabelingApi, Rules, TaskDoc } from "./api.js";
import { allowedChars, maxLength, validateLabel } from "./validation.js";

export type TaskState = "viewing" | "entered" | "submitted" | "rejected";

export interface SessionTask {
  doc: TaskDoc;
  entry: string;
  state: TaskState;
  /** Shown inline under the entry; server reasons override local ones. */
  reason: string | null;
}

export interface Counters {
  fetched: number;
  labeled: number;
  rejected: number;
  conflicts: number;
}

export interface SessionEvents {
  /** Any state change the view should re-render for. */
  onChange?: () => void;
  /** One-line transient notices (rejections, conflicts, errors). */
  onNotice?: (text: string) => void;
}

export class LabelingSession {
  readonly tasks: SessionTask[] = [];
  readonly pending: SessionTask[] = [];
  readonly counters: Counters = { fetched: 0, labeled: 0, rejected: 0, conflicts: 0 };
  /** Round number of the first task seen; progress queries use it. */
  round: number | null = null;
  /** Last transport-level failure, for the view's error banner. */
  lastError: string | null = null;

  private readonly allowed: Set<string>;
  private readonly maxLen: number;
  private refilling = false;

  constructor(
    private readonly api: LabelingApi,
    readonly rules: Rules,
    readonly submitter: string,
    private readonly events: SessionEvents = {},
  ) {
    this.allowed = allowedChars(rules);
    this.maxLen = maxLength(rules);
  }

  get current(): SessionTask | null {
    return this.tasks.length > 0 ? this.tasks[0] : null;
  }

  /** Tasks held locally in any form (visible queue plus in-flight). */
  get held(): number {
    return this.tasks.length + this.pending.length;
  }

  private changed(): void {
    this.events.onChange?.();
  }

  private notice(text: string): void {
    this.events.onNotice?.(text);
  }

  /** Fetch up to `limit` fresh tasks; returns how many were added. */
  async refill(limit = 20): Promise<number> {
    if (this.refilling) return 0;
    this.refilling = true;
    try {
      const batch = await this.api.fetchBatch(limit, this.submitter);
      this.lastError = null;
      const heldIds = new Set(
        [...this.tasks, ...this.pending].map((t) => t.doc.task_id),
      );
      let added = 0;
      for (const doc of batch) {
        if (heldIds.has(doc.task_id)) continue;
        this.tasks.push({
          doc,
          entry: "",
          state: "viewing",
          reason: doc.rejection_reason,
        });
        added += 1;
      }
      this.counters.fetched += added;
      if (added > 0 && this.round === null) this.round = batch[0].round;
      this.changed();
      return added;
    } catch (e) {
      this.lastError = String(e instanceof Error ? e.message : e);
      this.changed();
      return 0;
    } finally {
      this.refilling = false;
    }
  }

  /** Append one character to the current entry, if the scheme allows it.
   * Keys come in as typed; when a character is not in the charset but
   * its case twin is, the twin is used (single-case schemes stay
   * typeable with caps lock on). */
  type(ch: string): void {
    const task = this.current;
    if (!task || ch.length !== 1) return;
    if (task.entry.length >= this.maxLen) return;
    let use: string | null = null;
    if (this.allowed.has(ch)) use = ch;
    else {
      const flipped = ch === ch.toLowerCase() ? ch.toUpperCase() : ch.toLowerCase();
      if (this.allowed.has(flipped)) use = flipped;
    }
    if (use === null) return;
    task.entry += use;
    task.state = "entered";
    task.reason = null; // typing clears the surfaced reason
    this.changed();
  }

  erase(): void {
    const task = this.current;
    if (!task || task.entry.length === 0) return;
    task.entry = task.entry.slice(0, -1);
    if (task.entry.length === 0) task.state = "viewing";
    task.reason = null;
    this.changed();
  }

  clearEntry(): void {
    const task = this.current;
    if (!task) return;
    task.entry = "";
    task.state = "viewing";
    task.reason = null;
    this.changed();
  }

  /** Rotate the current task to the back of the local queue. */
  skip(): void {
    if (this.tasks.length < 2) return;
    const task = this.tasks.shift() as SessionTask;
    this.tasks.push(task);
    this.changed();
  }

  /** Optimistically submit the current entry. Local prevalidation
   * failures keep the task current with the reason inline and never
   * reach the server. */
  async submit(): Promise<void> {
    const task = this.current;
    if (!task) return;
    const localReason = validateLabel(this.rules, task.entry);
    if (localReason !== null) {
      task.reason = localReason;
      this.changed();
      return;
    }

    task.state = "submitted";
    task.reason = null;
    this.tasks.shift();
    this.pending.push(task);
    this.changed();

    let updated: TaskDoc;
    try {
      updated = await this.api.submitLabel(task.doc.task_id, task.entry, this.submitter);
    } catch (e) {
      this.unpend(task);
      if (e instanceof ApiError && e.status === 409) {
        this.counters.conflicts += 1;
        this.notice(`task ${task.doc.task_id} withdrawn: ${e.message}`);
      } else {
        // transport trouble: nothing was lost, put it back on screen
        task.state = "entered";
        this.tasks.unshift(task);
        this.lastError = String(e instanceof Error ? e.message : e);
        this.notice(`submit failed: ${this.lastError}`);
      }
      this.changed();
      return;
    }

    this.unpend(task);
    this.lastError = null;
    task.doc = updated;
    if (updated.status === "labeled") {
      this.counters.labeled += 1;
    } else {
      // the server bounced the label; surface why and try again later
      task.state = "rejected";
      task.reason = updated.rejection_reason ?? "label rejected";
      task.entry = "";
      this.counters.rejected += 1;
      this.tasks.push(task);
      this.notice(`label rejected: ${task.reason}`);
    }
    this.changed();
  }

  private unpend(task: SessionTask): void {
    const i = this.pending.indexOf(task);
    if (i >= 0) this.pending.splice(i, 1);
  }
}
