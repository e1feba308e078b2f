import { describe, expect, it } from "vitest";

import type { Rules } from "../src/api.js";
import { allowedChars, maxLength, validateLabel } from "../src/validation.js";

const rules: Rules = {
  scheme_id: "t",
  charset: "abcd19",
  excluded_chars: ["1", "9"],
  length_range: [3, 5],
};

describe("validateLabel", () => {
  it("accepts labels inside the window built from allowed chars", () => {
    expect(validateLabel(rules, "abc")).toBeNull();
    expect(validateLabel(rules, "abcda")).toBeNull();
  });

  it("reports out-of-window lengths with the window", () => {
    expect(validateLabel(rules, "ab")).toBe("length 2 outside [3, 5]");
    expect(validateLabel(rules, "abcdab")).toBe("length 6 outside [3, 5]");
    expect(validateLabel(rules, "")).toBe("length 0 outside [3, 5]");
  });

  it("reports excluded characters before unknown ones", () => {
    expect(validateLabel(rules, "ab1")).toBe("character '1' is excluded in this scheme");
    expect(validateLabel(rules, "abz")).toBe("character 'z' not in the scheme charset");
  });

  it("flags the first offending character", () => {
    expect(validateLabel(rules, "z1a")).toBe("character 'z' not in the scheme charset");
  });
});

describe("allowedChars / maxLength", () => {
  it("drops exclusions from the charset", () => {
    expect([...allowedChars(rules)].sort().join("")).toBe("abcd");
  });

  it("handles no exclusions", () => {
    const open: Rules = { ...rules, excluded_chars: [] };
    expect(allowedChars(open).size).toBe(6);
  });

  it("exposes the upper length bound", () => {
    expect(maxLength(rules)).toBe(5);
  });
});
