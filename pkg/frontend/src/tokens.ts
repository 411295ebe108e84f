/** Whitespace tokenization and token-level selection snapping.
 *
 * The data model is token-based, so character selections made in the browser
 * are snapped outward to whole tokens before they become support payloads.
 */

import type { SupportRecord } from "./api.js";

export interface TokenOffset {
  text: string;
  start: number; // character offset (inclusive)
  end: number;   // character offset (exclusive)
  index: number;
}

export interface TokenSelection {
  start: number;   // token index, inclusive
  end: number;     // token index, inclusive
  snapped: boolean; // true when the character selection crossed token edges
}

export function tokenize(text: string): string[] {
  return text.split(/\s+/).filter((t) => t.length > 0);
}

export function tokenOffsets(text: string): TokenOffset[] {
  const offsets: TokenOffset[] = [];
  const pattern = /\S+/g;
  let match: RegExpExecArray | null;
  let index = 0;
  while ((match = pattern.exec(text)) !== null) {
    offsets.push({
      text: match[0],
      start: match.index,
      end: match.index + match[0].length,
      index,
    });
    index += 1;
  }
  return offsets;
}

/** Snap a character range onto token boundaries; null when nothing is selected. */
export function snapSelectionToTokens(
  text: string,
  charStart: number,
  charEnd: number,
): TokenSelection | null {
  if (charEnd < charStart) {
    [charStart, charEnd] = [charEnd, charStart];
  }
  const offsets = tokenOffsets(text);
  const touched = offsets.filter((t) => t.start < charEnd && t.end > charStart);
  if (touched.length === 0) {
    return null;
  }
  const first = touched[0];
  const last = touched[touched.length - 1];
  const snapped = charStart !== first.start || charEnd !== last.end;
  return { start: first.index, end: last.index, snapped };
}

export function buildSupportPayload(
  text: string,
  selection: TokenSelection,
  entityType: string,
): SupportRecord {
  const tokens = tokenize(text);
  if (selection.start < 0 || selection.end >= tokens.length || selection.start > selection.end) {
    throw new Error(`selection (${selection.start}, ${selection.end}) outside token range`);
  }
  if (!entityType) {
    throw new Error("entity type must be non-empty");
  }
  return {
    entity_type: entityType,
    tokens,
    entity_start: selection.start,
    entity_end: selection.end,
  };
}
