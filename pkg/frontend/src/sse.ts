/**
 * Server-sent events over fetch streaming (works in browsers and node), with
 * client-side sequence enforcement: per-run seq numbers must be contiguous.
 * Stale or duplicate events are dropped (never reordered); a gap triggers a
 * resync: the feed reconnects, and the stream contract guarantees a fresh
 * snapshot arrives first.
 */

import type { StreamEvent } from "./types.js";

/** Incremental SSE parser; feed it text chunks, get `data:` payloads back. */
export class SseParser {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const payloads: string[] = [];
    let boundary: number;
    while ((boundary = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const data = block
        .split("\n")
        .filter((line) => line.startsWith("data: "))
        .map((line) => line.slice(6))
        .join("\n");
      if (data) payloads.push(data);
    }
    return payloads;
  }
}

export interface FeedHandlers {
  onEvent: (event: StreamEvent) => void;
  /** called when a seq gap forces a resync (before reconnecting) */
  onGap?: (runId: string, expected: number, got: number) => void;
  onDisconnect?: (error?: unknown) => void;
}

export class EventFeed {
  private lastSeq = new Map<string, number>();
  private controller: AbortController | null = null;
  private stopped = false;

  constructor(
    private readonly base: string,
    private readonly handlers: FeedHandlers,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  /** Validate ordering; returns true if the event should be delivered. */
  accept(event: StreamEvent): boolean {
    if (event.type === "snapshot") {
      this.lastSeq.clear(); // snapshot marks a fresh baseline
      return true;
    }
    if (event.type !== "telemetry") return true;
    const last = this.lastSeq.get(event.run_id) ?? 0;
    if (event.seq <= last) return false; // duplicate or stale: drop, never reorder
    if (event.seq !== last + 1) {
      this.handlers.onGap?.(event.run_id, last + 1, event.seq);
      this.resync();
      return false;
    }
    this.lastSeq.set(event.run_id, event.seq);
    return true;
  }

  async connect(runId?: string, replay = false): Promise<void> {
    this.stopped = false;
    const query = new URLSearchParams();
    if (runId) query.set("run_id", runId);
    if (replay) query.set("replay", "1");
    const suffix = query.toString() ? `?${query}` : "";
    this.controller = new AbortController();
    try {
      const response = await this.fetchImpl(`${this.base}/events${suffix}`, {
        signal: this.controller.signal,
      });
      if (!response.ok || !response.body) throw new Error(`events stream: HTTP ${response.status}`);
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const payload of parser.push(decoder.decode(value, { stream: true }))) {
          const event = JSON.parse(payload) as StreamEvent;
          if (this.accept(event)) this.handlers.onEvent(event);
        }
      }
      this.handlers.onDisconnect?.();
    } catch (error) {
      if (!this.stopped) this.handlers.onDisconnect?.(error);
    }
  }

  /** Drop the connection; the caller (or resync) reconnects snapshot-first. */
  close(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private resync(): void {
    this.controller?.abort();
    this.lastSeq.clear();
  }
}
