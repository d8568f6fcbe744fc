/** Split a string into plain/emphasized segments from API-provided
 * character ranges. Ranges are rendered exactly as given (no client-side
 * recomputation); the segments always concatenate back to the original
 * string. */

export interface Segment {
  text: string;
  highlighted: boolean;
}

export function segmentText(
  text: string,
  ranges: ReadonlyArray<readonly [number, number]>,
): Segment[] {
  const segments: Segment[] = [];
  let cursor = 0;
  for (const [rawStart, rawEnd] of ranges) {
    // clamp defensively; a malformed range must never lose characters
    const start = Math.max(cursor, Math.min(rawStart, text.length));
    const end = Math.max(start, Math.min(rawEnd, text.length));
    if (start > cursor) {
      segments.push({ text: text.slice(cursor, start), highlighted: false });
    }
    if (end > start) {
      segments.push({ text: text.slice(start, end), highlighted: true });
    }
    cursor = end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), highlighted: false });
  }
  if (segments.length === 0) {
    segments.push({ text, highlighted: false });
  }
  return segments;
}
