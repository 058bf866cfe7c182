import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { SSEParser } from "../src/sse.js";

const here = dirname(fileURLToPath(import.meta.url));
const recorded = readFileSync(join(here, "fixtures", "stream.txt"), "utf8");

describe("SSEParser", () => {
  it("parses a full recorded stream", () => {
    const parser = new SSEParser();
    const frames = parser.feed(recorded);
    expect(frames.length).toBeGreaterThan(0);
    for (const frame of frames) {
      expect(frame.event).toBe("trace");
      const data = JSON.parse(frame.data) as { seq: number };
      expect(frame.id).toBe(data.seq);
    }
    const seqs = frames.map((f) => f.id);
    expect(seqs).toEqual([...seqs].sort((a, b) => (a ?? 0) - (b ?? 0)));
  });

  it("is chunk-boundary agnostic", () => {
    const whole = new SSEParser().feed(recorded);
    for (const size of [1, 7, 64]) {
      const parser = new SSEParser();
      const frames = [];
      for (let i = 0; i < recorded.length; i += size) {
        frames.push(...parser.feed(recorded.slice(i, i + size)));
      }
      expect(frames).toEqual(whole);
    }
  });

  it("drops keep-alive comment frames", () => {
    const parser = new SSEParser();
    expect(parser.feed(": keep-alive\n\n")).toEqual([]);
    const after = parser.feed('id: 9\nevent: trace\ndata: {"seq":9}\n\n');
    expect(after).toEqual([{ id: 9, event: "trace", data: '{"seq":9}' }]);
  });

  it("joins multiple data lines with newlines", () => {
    const frames = new SSEParser().feed("data: first\ndata: second\n\n");
    expect(frames).toEqual([{ id: null, event: "message", data: "first\nsecond" }]);
  });

  it("tolerates CRLF line endings", () => {
    const frames = new SSEParser().feed("id: 3\r\nevent: trace\r\ndata: x\r\n\r\n");
    expect(frames).toEqual([{ id: 3, event: "trace", data: "x" }]);
  });

  it("does not dispatch a frame without data", () => {
    const parser = new SSEParser();
    expect(parser.feed("id: 5\nevent: trace\n\n")).toEqual([]);
    // id persists per the SSE contract; the next data frame carries it
    expect(parser.feed("data: later\n\n")).toEqual([
      { id: 5, event: "message", data: "later" },
    ]);
  });
});
