/** Pure view-model helpers for the progress panel. */

import type { ConfusionRow, Progress } from "./api.js";

/** SVG path for a success-rate sparkline. Rates are clamped to [0, 1];
 * the vertical axis is inverted so higher rates sit higher. A single
 * point becomes a short horizontal dash so it stays visible. */
export function sparklinePath(history: number[], width = 120, height = 28): string {
  if (history.length === 0) return "";
  const pad = 2;
  const clamp = (r: number) => Math.min(1, Math.max(0, r));
  const y = (r: number) => pad + (1 - clamp(r)) * (height - 2 * pad);
  if (history.length === 1) {
    const yy = y(history[0]).toFixed(1);
    return `M${pad},${yy} L${(pad + 8).toFixed(1)},${yy}`;
  }
  const step = (width - 2 * pad) / (history.length - 1);
  return history
    .map((r, i) => {
      const cmd = i === 0 ? "M" : "L";
      return `${cmd}${(pad + i * step).toFixed(1)},${y(r).toFixed(1)}`;
    })
    .join(" ");
}

export function progressSummary(p: Progress): string {
  return `${p.labeled}/${p.total} labeled · ${p.assigned} assigned · ${p.queued} queued`;
}

/** Top confused characters, capped for the side panel. */
export function confusionRows(p: Progress, limit = 8): ConfusionRow[] {
  return (p.confusion_top ?? []).slice(0, limit);
}

export function formatRate(rate: number): string {
  return `${(rate * 100).toFixed(1)}%`;
}
