/** Incremental text/event-stream parsing plus the trace subscription. */

export interface StreamFrame {
  id: number | null;
  event: string;
  data: string;
}

/**
 * Feed arbitrary chunk boundaries; complete frames come back in order.
 * Comment lines (leading ":") are dropped, so keep-alive frames produce
 * nothing. A frame with no data lines is not dispatched.
 */
export class SSEParser {
  private buffer = "";
  private id: number | null = null;
  private event = "";
  private data: string[] = [];

  feed(chunk: string): StreamFrame[] {
    this.buffer += chunk;
    const frames: StreamFrame[] = [];
    for (;;) {
      const newline = this.buffer.indexOf("\n");
      if (newline < 0) break;
      let line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      const frame = this.consumeLine(line);
      if (frame) frames.push(frame);
    }
    return frames;
  }

  private consumeLine(line: string): StreamFrame | null {
    if (line === "") return this.dispatch();
    if (line.startsWith(":")) return null;
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") {
      const parsed = Number(value);
      this.id = Number.isFinite(parsed) ? parsed : null;
    } else if (field === "event") {
      this.event = value;
    } else if (field === "data") {
      this.data.push(value);
    }
    return null;
  }

  private dispatch(): StreamFrame | null {
    const frame =
      this.data.length === 0
        ? null
        : { id: this.id, event: this.event || "message", data: this.data.join("\n") };
    this.event = "";
    this.data = [];
    return frame;
  }
}

export interface TracePayloads {
  turn: number;
  phase: string;
  seq: number;
  payload: Record<string, unknown>;
}

export interface ReceivedFrame extends TracePayloads {
  receivedAt: number;
}

export interface StreamHandle {
  close(): void;
}

export interface StreamOptions {
  onFrame(frame: ReceivedFrame): void;
  /** Called once when the stream ends for any reason other than close(). */
  onDown(reason: string): void;
  fetchImpl?: (input: string, init?: RequestInit) => Promise<Response>;
  now?: () => number;
}

export function streamTrace(baseUrl: string, sessionId: string, options: StreamOptions): StreamHandle {
  const controller = new AbortController();
  const fetchImpl = options.fetchImpl ?? ((input: string, init?: RequestInit) => fetch(input, init));
  const now = options.now ?? (() => Date.now());
  let closed = false;

  const down = (reason: string) => {
    if (!closed) {
      closed = true;
      options.onDown(reason);
    }
  };

  void (async () => {
    let response: Response;
    try {
      response = await fetchImpl(`${baseUrl}/sessions/${sessionId}/events`, {
        headers: { accept: "text/event-stream" },
        signal: controller.signal,
      });
    } catch (exc) {
      down(exc instanceof Error ? exc.message : String(exc));
      return;
    }
    if (!response.ok || !response.body) {
      down(`stream request failed with status ${response.status}`);
      return;
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SSEParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
          if (frame.event !== "trace") continue;
          const parsed = JSON.parse(frame.data) as TracePayloads;
          options.onFrame({ ...parsed, receivedAt: now() });
        }
      }
      down("stream closed by server");
    } catch (exc) {
      down(exc instanceof Error ? exc.message : String(exc));
    }
  })();

  return {
    close() {
      closed = true;
      controller.abort();
    },
  };
}
