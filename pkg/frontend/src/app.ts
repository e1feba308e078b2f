/** Browser shell: wires the session to the DOM and keeps polling.
 *
 * All state of record lives on the server; this page can be reloaded at
 * any time and will pick the queue back up. The only local artifact is
 * a stable submitter id so one person's reloads look like one labeler.
 * Tasks fetched but not yet labeled would strand on reload (the server
 * hands queued tasks out once), so an unload guard warns while any are
 * held.
 */

import { LabelingApi, Progress, Rules } from "./api.js";
import { confusionRows, formatRate, progressSummary, sparklinePath } from "./dashboard.js";
import { handleKey } from "./keyboard.js";
import { LabelingSession } from "./session.js";
import { maxLength } from "./validation.js";

const POLL_MS = 1500;
const LOW_WATER = 3;
const BATCH = 20;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function submitterId(): string {
  const key = "labeler-id";
  let id = localStorage.getItem(key);
  if (!id) {
    id = `labeler-${Math.random().toString(36).slice(2, 8)}`;
    localStorage.setItem(key, id);
  }
  return id;
}

class App {
  private session: LabelingSession | null = null;
  private rules: Rules | null = null;
  private zoom = 2; // captchas are tiny; start doubled
  private inverted = false;
  private noticeTimer: number | undefined;
  private backoffMs = 1000;

  constructor(private readonly api: LabelingApi) {}

  async boot(): Promise<void> {
    try {
      await this.api.health();
      this.rules = await this.api.rules();
    } catch (e) {
      this.showBanner(`service unreachable: ${String(e instanceof Error ? e.message : e)}; retrying…`);
      window.setTimeout(() => void this.boot(), this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, 15000);
      return;
    }
    this.backoffMs = 1000;
    this.hideBanner();
    el("scheme").textContent =
      `${this.rules.scheme_id} · length ${this.rules.length_range[0]}–${this.rules.length_range[1]}`;

    this.session = new LabelingSession(this.api, this.rules, submitterId(), {
      onChange: () => this.render(),
      onNotice: (text) => this.showNotice(text),
    });

    document.addEventListener("keydown", (ev) => this.onKey(ev));
    window.addEventListener("beforeunload", (ev) => {
      if (this.session && this.session.held > 0) ev.preventDefault();
    });

    await this.session.refill(BATCH);
    this.render();
    window.setInterval(() => void this.tick(), POLL_MS);
  }

  private async tick(): Promise<void> {
    const session = this.session;
    if (!session) return;
    if (session.tasks.length < LOW_WATER) await session.refill(BATCH);
    if (session.lastError) this.showBanner(`service trouble: ${session.lastError} (retrying)`);
    else this.hideBanner();
    if (session.round !== null) {
      try {
        const progress = await this.api.progress(session.round);
        this.renderDashboard(progress);
      } catch {
        // banner already covers connectivity; keep the last dashboard
      }
    }
    this.render();
  }

  private onKey(ev: KeyboardEvent): void {
    if (!this.session) return;
    if (ev.key === "F2") {
      this.inverted = !this.inverted;
      ev.preventDefault();
      this.render();
      return;
    }
    if (ev.key === "F3") {
      this.zoom = this.zoom === 2 ? 1 : 2;
      ev.preventDefault();
      this.render();
      return;
    }
    if (handleKey(this.session, ev)) ev.preventDefault();
  }

  private render(): void {
    const session = this.session;
    if (!session || !this.rules) return;
    const image = el<HTMLImageElement>("image");
    const waiting = el("waiting");
    const task = session.current;

    if (task) {
      const url = this.api.imageUrl(task.doc);
      if (image.dataset["ref"] !== url) {
        image.src = url;
        image.dataset["ref"] = url;
      }
      image.classList.add("shown");
      image.classList.toggle("inverted", this.inverted);
      image.style.width = image.naturalWidth
        ? `${image.naturalWidth * this.zoom}px`
        : "";
      waiting.style.display = "none";
    } else {
      image.classList.remove("shown");
      delete image.dataset["ref"];
      waiting.style.display = "";
      waiting.textContent = session.pending.length > 0
        ? "submitting…"
        : "waiting for tasks (the campaign may be training)…";
    }

    this.renderEntry(task ? task.entry : "", Boolean(task));
    el("reason").textContent = task?.reason ?? "";
    const c = session.counters;
    el("counters").textContent =
      `this session: ${c.labeled} labeled · ${c.rejected} rejected · ` +
      `${c.conflicts} withdrawn · ${session.tasks.length} on deck`;
  }

  private renderEntry(entry: string, active: boolean): void {
    const row = el("entry-row");
    row.textContent = "";
    if (!this.rules || !active) return;
    const cells = Math.max(maxLength(this.rules), entry.length);
    for (let i = 0; i < cells; i += 1) {
      const cell = document.createElement("span");
      const ch = entry[i];
      cell.className = "cell" + (ch ? " filled" : i >= this.rules.length_range[0] ? " ghost" : "");
      cell.textContent = ch ?? "";
      row.appendChild(cell);
    }
  }

  private renderDashboard(progress: Progress): void {
    el("progress-line").textContent = progressSummary(progress);
    const history = progress.history ?? [];
    el("spark").setAttribute("d", sparklinePath(history, 230, 34));
    el("spark-empty").style.display = history.length > 0 ? "none" : "";
    const rows = confusionRows(progress);
    const list = el("confusion");
    list.textContent = "";
    for (const row of rows) {
      const item = document.createElement("li");
      const char = document.createElement("span");
      char.className = "char";
      char.textContent = row.char;
      const rate = document.createElement("span");
      rate.textContent = `${formatRate(row.rate)} (${row.misrecognized}/${row.exposure})`;
      item.append(char, rate);
      list.appendChild(item);
    }
    el("confusion-empty").style.display = rows.length > 0 ? "none" : "";
  }

  private showNotice(text: string): void {
    const node = el("notice");
    node.textContent = text;
    node.classList.add("show");
    if (this.noticeTimer !== undefined) window.clearTimeout(this.noticeTimer);
    this.noticeTimer = window.setTimeout(() => node.classList.remove("show"), 4000);
  }

  private showBanner(text: string): void {
    const banner = el("banner");
    banner.textContent = text;
    banner.classList.add("show");
  }

  private hideBanner(): void {
    el("banner").classList.remove("show");
  }
}

void new App(new LabelingApi("")).boot();
