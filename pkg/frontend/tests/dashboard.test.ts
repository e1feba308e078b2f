import { describe, expect, it } from "vitest";

import type { Progress } from "../src/api.js";
import { confusionRows, formatRate, progressSummary, sparklinePath } from "../src/dashboard.js";

const base: Progress = { round: 2, total: 100, labeled: 37, queued: 61, assigned: 2 };

describe("sparklinePath", () => {
  it("is empty with no history", () => {
    expect(sparklinePath([])).toBe("");
  });

  it("draws a visible dash for a single point", () => {
    const d = sparklinePath([0.5], 120, 28);
    expect(d).toMatch(/^M2,\d+(\.\d+)? L10(\.0)?,/);
  });

  it("spans the width and inverts the vertical axis", () => {
    const d = sparklinePath([0.0, 1.0], 120, 28);
    const parts = d.split(" ");
    expect(parts).toHaveLength(2);
    // rate 0 sits at the bottom (y = height - pad), rate 1 at the top
    expect(parts[0]).toBe("M2.0,26.0");
    expect(parts[1]).toBe("L118.0,2.0");
  });

  it("clamps rates outside [0, 1]", () => {
    const d = sparklinePath([-0.5, 1.5], 120, 28);
    expect(d).toBe("M2.0,26.0 L118.0,2.0");
  });

  it("emits one command per point", () => {
    const d = sparklinePath([0.1, 0.2, 0.3, 0.4]);
    expect(d.split(" ")).toHaveLength(4);
    expect(d.startsWith("M")).toBe(true);
    expect(d.split(" ").slice(1).every((p) => p.startsWith("L"))).toBe(true);
  });
});

describe("progress view-model", () => {
  it("summarizes the counters", () => {
    expect(progressSummary(base)).toBe("37/100 labeled · 2 assigned · 61 queued");
  });

  it("caps confusion rows and tolerates their absence", () => {
    expect(confusionRows(base)).toEqual([]);
    const rows = Array.from({ length: 12 }, (_, i) => ({
      char: String(i),
      rate: 0.5,
      misrecognized: 1,
      exposure: 2,
    }));
    expect(confusionRows({ ...base, confusion_top: rows })).toHaveLength(8);
    expect(confusionRows({ ...base, confusion_top: rows }, 3)).toHaveLength(3);
  });

  it("formats rates as percentages", () => {
    expect(formatRate(0.3333)).toBe("33.3%");
    expect(formatRate(1)).toBe("100.0%");
  });
});
