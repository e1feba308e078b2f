/** Client-side label prevalidation from the server's rule document.
 *
 * The rules come from GET /api/rules, so the charset and length window
 * are never duplicated here; this mirrors the server's checks only to
 * catch mistakes before a round trip. The server remains authoritative,
 * and its rejection reasons win over anything produced locally.
 */

import type { Rules } from "./api.js";

/** Characters a label may actually use: charset minus exclusions. */
export function allowedChars(rules: Rules): Set<string> {
  const excluded = new Set(rules.excluded_chars);
  const allowed = new Set<string>();
  for (const c of rules.charset) {
    if (!excluded.has(c)) allowed.add(c);
  }
  return allowed;
}

export function maxLength(rules: Rules): number {
  return rules.length_range[1];
}

/** None-or-reason validation, same shape as the server side. */
export function validateLabel(rules: Rules, label: string): string | null {
  const [lo, hi] = rules.length_range;
  if (label.length < lo || label.length > hi) {
    return `length ${label.length} outside [${lo}, ${hi}]`;
  }
  const excluded = new Set(rules.excluded_chars);
  const allowed = allowedChars(rules);
  for (const c of label) {
    if (excluded.has(c)) return `character '${c}' is excluded in this scheme`;
    if (!allowed.has(c)) return `character '${c}' not in the scheme charset`;
  }
  return null;
}
