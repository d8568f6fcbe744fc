import { describe, expect, it } from "vitest";
import { segmentText } from "../src/highlight.js";

function reconstruct(text: string, ranges: [number, number][]): string {
  return segmentText(text, ranges)
    .map((segment) => segment.text)
    .join("");
}

describe("segmentText", () => {
  it("returns a single plain segment without ranges", () => {
    expect(segmentText("plain text", [])).toEqual([
      { text: "plain text", highlighted: false },
    ]);
  });

  it("splits around one range", () => {
    expect(segmentText("abcdef", [[2, 4]])).toEqual([
      { text: "ab", highlighted: false },
      { text: "cd", highlighted: true },
      { text: "ef", highlighted: false },
    ]);
  });

  it("handles ranges at both ends", () => {
    expect(segmentText("abcd", [[0, 2], [2, 4]])).toEqual([
      { text: "ab", highlighted: true },
      { text: "cd", highlighted: true },
    ]);
  });

  it("reconstructs the original string exactly", () => {
    const text = "variational autoencoder is a deep generative model.";
    const cases: [number, number][][] = [
      [],
      [[0, 23]],
      [[0, 23], [30, 51]],
      [[5, 9], [10, 12], [40, 51]],
    ];
    for (const ranges of cases) {
      expect(reconstruct(text, ranges)).toBe(text);
    }
  });

  it("reconstructs under random ranges", () => {
    const text = "the quick brown fox jumps over the lazy dog";
    let seed = 12345;
    const rand = (n: number) => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed % n;
    };
    for (let trial = 0; trial < 200; trial++) {
      const ranges: [number, number][] = [];
      let cursor = 0;
      while (cursor < text.length - 2 && ranges.length < 5) {
        const start = cursor + rand(6);
        const end = start + 1 + rand(8);
        if (end > text.length) break;
        ranges.push([start, Math.min(end, text.length)]);
        cursor = end + 1;
      }
      expect(reconstruct(text, ranges)).toBe(text);
    }
  });

  it("clamps malformed ranges without losing characters", () => {
    expect(reconstruct("short", [[3, 99]])).toBe("short");
    expect(reconstruct("short", [[-2, 2]])).toBe("short");
  });

  it("handles empty input", () => {
    expect(reconstruct("", [])).toBe("");
  });
});
