/** Keyboard bindings for the labeling flow.
 *
 * The whole loop is drivable without a pointer: printable characters
 * type into the entry, Enter submits, Backspace erases, Escape clears,
 * ArrowRight skips the task to the back of the queue. View-level keys
 * (zoom, invert) live in the app shell, not here.
 */

import type { LabelingSession } from "./session.js";

export interface KeyStroke {
  key: string;
  ctrlKey?: boolean;
  altKey?: boolean;
  metaKey?: boolean;
}

/** Apply one keystroke to the session; true when consumed. */
export function handleKey(session: LabelingSession, stroke: KeyStroke): boolean {
  if (stroke.ctrlKey || stroke.altKey || stroke.metaKey) return false;
  switch (stroke.key) {
    case "Enter":
      void session.submit();
      return true;
    case "Backspace":
      session.erase();
      return true;
    case "Escape":
      session.clearEntry();
      return true;
    case "ArrowRight":
      session.skip();
      return true;
    default:
      if (stroke.key.length === 1) {
        session.type(stroke.key);
        return true;
      }
      return false;
  }
}
