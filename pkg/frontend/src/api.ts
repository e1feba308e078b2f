/** Typed client for the labeling service JSON API.
 *
 * Every JSON response carries `protocol_version: 1`; anything else is a
 * hard error, so a mismatched server fails loudly instead of subtly.
 * Error bodies look like `{"error": "..."}` with a 4xx/5xx status; the
 * notable one is 409, which means the task moved on without us (labeled
 * by someone else, or an illegal transition).
 */

export const PROTOCOL_VERSION = 1;

export type TaskStatus = "queued" | "assigned" | "labeled" | "rejected";

export interface TaskDoc {
  task_id: string;
  round: number;
  sample_id: string;
  image_ref: string;
  status: TaskStatus;
  submitted_label: string | null;
  submitter: string | null;
  rejection_reason: string | null;
}

export interface Rules {
  scheme_id: string;
  charset: string;
  excluded_chars: string[];
  length_range: [number, number];
}

export interface ConfusionRow {
  char: string;
  rate: number;
  misrecognized: number;
  exposure: number;
}

export interface Progress {
  round: number;
  total: number;
  labeled: number;
  queued: number;
  assigned: number;
  /** Success-rate trajectory, when the campaign publishes one. */
  history?: number[];
  /** Hardest characters so far, when the campaign publishes them. */
  confusion_top?: ConfusionRow[];
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

function checkProtocol(doc: Record<string, unknown>): void {
  if (doc["protocol_version"] !== PROTOCOL_VERSION) {
    throw new ApiError(
      `unsupported protocol_version ${JSON.stringify(doc["protocol_version"])}`,
      200,
    );
  }
}

async function parseError(resp: Response): Promise<never> {
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const doc = (await resp.json()) as { error?: string };
    if (doc.error) message = doc.error;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(message, resp.status);
}

export class LabelingApi {
  constructor(readonly base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) await parseError(resp);
    const doc = (await resp.json()) as Record<string, unknown>;
    checkProtocol(doc);
    return doc as T;
  }

  async health(): Promise<void> {
    await this.get<{ status: string }>("/api/health");
  }

  async rules(): Promise<Rules> {
    const doc = await this.get<{ rules: Rules }>("/api/rules");
    return doc.rules;
  }

  async fetchBatch(limit: number, submitter: string): Promise<TaskDoc[]> {
    const query = `limit=${limit}&submitter=${encodeURIComponent(submitter)}`;
    const doc = await this.get<{ tasks: TaskDoc[] }>(`/api/batch?${query}`);
    return doc.tasks;
  }

  async submitLabel(taskId: string, label: string, submitter: string): Promise<TaskDoc> {
    const resp = await fetch(this.base + "/api/label", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ task_id: taskId, label, submitter }),
    });
    if (!resp.ok) await parseError(resp);
    const doc = (await resp.json()) as Record<string, unknown>;
    checkProtocol(doc);
    return (doc as unknown as { task: TaskDoc }).task;
  }

  async progress(round: number): Promise<Progress> {
    return await this.get<Progress>(`/api/progress?round=${round}`);
  }

  /** Absolute URL for a task's image. */
  imageUrl(task: TaskDoc): string {
    return this.base + task.image_ref;
  }
}
