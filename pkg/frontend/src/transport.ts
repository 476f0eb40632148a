/** HTTP client for the telemetry API plus the event-stream plumbing.
 *
 * The stream opener is injectable: the browser build uses EventSource,
 * tests and headless clients use the fetch-based reader below. Both
 * see identical frame text.
 */

import { Ack, Frame } from "./frames.js";

export interface StreamHandle {
  close(): void;
}

export type StreamOpener = (
  url: string,
  onMessage: (data: string) => void,
  onError: () => void,
) => StreamHandle;

export type ConnectionStatus = "connecting" | "live" | "reconnecting";

export interface ClientOptions {
  fetchFn?: typeof fetch;
  opener?: StreamOpener;
  /** First reconnect delay in ms; doubles per failure up to the cap. */
  backoffBase?: number;
  backoffCap?: number;
  setTimeoutFn?: typeof setTimeout;
}

export function eventSourceOpener(url: string, onMessage: (d: string) => void, onError: () => void): StreamHandle {
  const source = new EventSource(url);
  source.onmessage = (ev) => onMessage(String(ev.data));
  source.onerror = () => onError();
  return { close: () => source.close() };
}

/** Minimal server-sent-events reader over fetch. Handles chunk splits
 * anywhere, ignores comment lines, joins multi-line data blocks. */
export function fetchStreamOpener(fetchFn: typeof fetch): StreamOpener {
  return (url, onMessage, onError) => {
    const controller = new AbortController();
    let closed = false;
    (async () => {
      try {
        const resp = await fetchFn(url, { signal: controller.signal });
        if (!resp.ok || !resp.body) throw new Error(`stream ${resp.status}`);
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        let data: string[] = [];
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let nl;
          while ((nl = buffer.indexOf("\n")) >= 0) {
            const line = buffer.slice(0, nl).replace(/\r$/, "");
            buffer = buffer.slice(nl + 1);
            if (line === "") {
              if (data.length) onMessage(data.join("\n"));
              data = [];
            } else if (line.startsWith("data:")) {
              data.push(line.slice(5).replace(/^ /, ""));
            }
            // comment lines (": ping") fall through silently
          }
        }
        if (!closed) onError();
      } catch {
        if (!closed) onError();
      }
    })();
    return {
      close: () => {
        closed = true;
        controller.abort();
      },
    };
  };
}

export class ApiClient {
  private fetchFn: typeof fetch;
  private opener: StreamOpener;
  private backoffBase: number;
  private backoffCap: number;
  private setTimeoutFn: typeof setTimeout;

  constructor(readonly base: string, options: ClientOptions = {}) {
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.opener = options.opener ?? eventSourceOpener;
    this.backoffBase = options.backoffBase ?? 500;
    this.backoffCap = options.backoffCap ?? 10_000;
    this.setTimeoutFn = options.setTimeoutFn ?? setTimeout.bind(globalThis);
  }

  async state(): Promise<Frame[]> {
    const resp = await this.fetchFn(`${this.base}/api/state`);
    if (!resp.ok) throw new Error(`state: HTTP ${resp.status}`);
    return (await resp.json()) as Frame[];
  }

  async history(topic: string, from: number, to: number): Promise<Frame[]> {
    const q = `topic=${encodeURIComponent(topic)}&from=${from}&to=${to}`;
    const resp = await this.fetchFn(`${this.base}/api/history?${q}`);
    if (!resp.ok) throw new Error(`history: HTTP ${resp.status}`);
    return (await resp.json()) as Frame[];
  }

  async command(kind: string, payload: unknown, id?: string): Promise<Ack> {
    const body: Record<string, unknown> = { kind, payload };
    if (id !== undefined) body.id = id;
    const resp = await this.fetchFn(`${this.base}/api/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const text = await resp.text();
    let parsed: unknown;
    try {
      parsed = JSON.parse(text);
    } catch {
      throw new Error(`command: HTTP ${resp.status}`);
    }
    if (resp.status === 504) return parsed as Ack; // pending, poll later
    if (!resp.ok) {
      const reason = (parsed as { error?: string }).error ?? `HTTP ${resp.status}`;
      throw new Error(reason);
    }
    return parsed as Ack;
  }

  async commandResult(id: string): Promise<Ack | null> {
    const resp = await this.fetchFn(`${this.base}/api/command?id=${encodeURIComponent(id)}`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`command poll: HTTP ${resp.status}`);
    return (await resp.json()) as Ack;
  }

  /** Open the event stream and keep it open: on error, back off and
   * retry with doubling delay, resetting once frames flow again. The
   * server replays its retained snapshot on every (re)connect, so no
   * separate state fetch is needed to heal. */
  connect(
    pattern: string,
    onFrame: (frame: Frame) => void,
    onStatus: (status: ConnectionStatus) => void = () => {},
  ): StreamHandle {
    const url = `${this.base}/api/stream?pattern=${encodeURIComponent(pattern)}`;
    let handle: StreamHandle | null = null;
    let stopped = false;
    let failures = 0;

    const open = () => {
      if (stopped) return;
      onStatus(failures === 0 ? "connecting" : "reconnecting");
      handle = this.opener(
        url,
        (data) => {
          failures = 0;
          onStatus("live");
          try {
            onFrame(JSON.parse(data) as Frame);
          } catch {
            // a torn frame is the server's bug, not a reason to die
          }
        },
        () => {
          if (stopped) return;
          handle?.close();
          const delay = Math.min(this.backoffBase * 2 ** failures, this.backoffCap);
          failures += 1;
          onStatus("reconnecting");
          this.setTimeoutFn(open, delay);
        },
      );
    };
    open();
    return {
      close: () => {
        stopped = true;
        handle?.close();
      },
    };
  }
}
