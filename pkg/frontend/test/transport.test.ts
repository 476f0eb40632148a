import { describe, expect, it } from "vitest";
import { Frame } from "../src/frames.js";
import { ApiClient, ConnectionStatus, StreamOpener, fetchStreamOpener } from "../src/transport.js";

function sseResponse(chunks: string[]): Response {
  const enc = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const c of chunks) controller.enqueue(enc.encode(c));
      controller.close();
    },
  });
  return { ok: true, status: 200, body } as unknown as Response;
}

describe("fetchStreamOpener", () => {
  it("reassembles events across arbitrary chunk splits", async () => {
    const chunks = [
      'data: {"a"', ":1}\n", "\n: pi", "ng\n\nda", "ta: line1\nda", "ta: line2\n\n",
    ];
    const messages: string[] = [];
    const ended = new Promise<void>((resolve) => {
      const opener = fetchStreamOpener(async () => sseResponse(chunks));
      opener("http://unused/stream", (d) => messages.push(d), () => resolve());
    });
    await ended;
    expect(messages).toEqual(['{"a":1}', "line1\nline2"]);
  });

  it("strips carriage returns and the optional space after the colon", async () => {
    const messages: string[] = [];
    const ended = new Promise<void>((resolve) => {
      const opener = fetchStreamOpener(async () => sseResponse(["data:bare\r\n\r\n"]));
      opener("http://unused/stream", (d) => messages.push(d), () => resolve());
    });
    await ended;
    expect(messages).toEqual(["bare"]);
  });

  it("reports connection loss when the body ends", async () => {
    let erred = false;
    await new Promise<void>((resolve) => {
      const opener = fetchStreamOpener(async () => sseResponse(["data: x\n\n"]));
      opener("http://unused/stream", () => {}, () => { erred = true; resolve(); });
    });
    expect(erred).toBe(true);
  });

  it("stays silent after an explicit close", async () => {
    let erred = false;
    const opener = fetchStreamOpener(async () => {
      const body = new ReadableStream<Uint8Array>({ pull: () => new Promise(() => {}) });
      return { ok: true, status: 200, body } as unknown as Response;
    });
    const handle = opener("http://unused/stream", () => {}, () => { erred = true; });
    await new Promise((r) => setTimeout(r, 20));
    handle.close();
    await new Promise((r) => setTimeout(r, 50));
    expect(erred).toBe(false);
  });
});

interface FakeTimer {
  fn: () => void;
  delay: number;
}

function makeClient(opener: StreamOpener) {
  const timers: FakeTimer[] = [];
  const setTimeoutFn = ((fn: () => void, delay: number) => {
    timers.push({ fn, delay });
    return 0;
  }) as unknown as typeof setTimeout;
  const client = new ApiClient("http://unused", {
    opener,
    setTimeoutFn,
    backoffBase: 500,
    backoffCap: 4000,
    fetchFn: (() => { throw new Error("no fetch in this test"); }) as unknown as typeof fetch,
  });
  return { client, timers };
}

describe("stream reconnection", () => {
  it("backs off exponentially to the cap and resets once frames flow", () => {
    const opened: { onMessage: (d: string) => void; onError: () => void }[] = [];
    const statuses: ConnectionStatus[] = [];
    const frames: Frame[] = [];
    const opener: StreamOpener = (_url, onMessage, onError) => {
      opened.push({ onMessage, onError });
      return { close: () => {} };
    };
    const { client, timers } = makeClient(opener);
    client.connect("gh/*/*", (f) => frames.push(f), (s) => statuses.push(s));

    expect(opened).toHaveLength(1);
    expect(statuses).toEqual(["connecting"]);

    const fail = () => {
      opened[opened.length - 1]!.onError();
      const timer = timers.shift()!;
      const delay = timer.delay;
      timer.fn();
      return delay;
    };
    expect(fail()).toBe(500);
    expect(fail()).toBe(1000);
    expect(fail()).toBe(2000);
    expect(fail()).toBe(4000);
    expect(fail()).toBe(4000); // capped
    expect(opened).toHaveLength(6);

    opened[5]!.onMessage('{"t":"pub","topic":"gh/zone0/temp","ts":1,"wall":"w","v":20,"u":"C"}');
    expect(frames).toHaveLength(1);
    expect(statuses[statuses.length - 1]).toBe("live");

    // backoff starts over after a healthy stretch
    expect(fail()).toBe(500);
  });

  it("drops torn frames without dying", () => {
    const opened: { onMessage: (d: string) => void }[] = [];
    const opener: StreamOpener = (_url, onMessage) => {
      opened.push({ onMessage });
      return { close: () => {} };
    };
    const { client } = makeClient(opener);
    const frames: Frame[] = [];
    client.connect("gh/*/*", (f) => frames.push(f));
    opened[0]!.onMessage('{"t":"pub","topic":"gh/zo');
    opened[0]!.onMessage('{"t":"pub","topic":"gh/zone0/temp","ts":2,"wall":"w","v":21,"u":"C"}');
    expect(frames).toHaveLength(1);
    expect(frames[0]!.v).toBe(21);
  });

  it("stops reopening after close", () => {
    let closes = 0;
    const opened: { onError: () => void }[] = [];
    const opener: StreamOpener = (_url, _onMessage, onError) => {
      opened.push({ onError });
      return { close: () => { closes += 1; } };
    };
    const { client, timers } = makeClient(opener);
    const handle = client.connect("gh/*/*", () => {});
    handle.close();
    expect(closes).toBe(1);
    opened[0]!.onError(); // late error from the closed stream
    expect(timers).toHaveLength(0);
  });

  it("encodes the subscription pattern into the url", () => {
    let seen = "";
    const opener: StreamOpener = (url) => {
      seen = url;
      return { close: () => {} };
    };
    const { client } = makeClient(opener);
    client.connect("gh/*/*", () => {});
    expect(seen).toBe("http://unused/api/stream?pattern=gh%2F*%2F*");
  });
});

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    text: async () => JSON.stringify(body),
    json: async () => body,
  } as unknown as Response;
}

describe("command round trips", () => {
  it("returns the ack on success", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
      calls.push({ url: String(url), init });
      return jsonResponse(200, { t: "ack", id: "c1", ok: true });
    }) as unknown as typeof fetch;
    const client = new ApiClient("http://unused", { fetchFn });
    const ack = await client.command("recharge_tank", { tank: 0, volume: 50 }, "c1");
    expect(ack.ok).toBe(true);
    expect(calls[0]!.url).toBe("http://unused/api/command");
    expect(JSON.parse(String(calls[0]!.init!.body))).toEqual({
      kind: "recharge_tank",
      payload: { tank: 0, volume: 50 },
      id: "c1",
    });
  });

  it("surfaces the server's rejection reason", async () => {
    const fetchFn = (async () => jsonResponse(400, {
      t: "ack", id: "c2", ok: false, error: "volume must be positive",
    })) as unknown as typeof fetch;
    const client = new ApiClient("http://unused", { fetchFn });
    await expect(client.command("recharge_tank", { tank: 0, volume: -1 }))
      .rejects.toThrow("volume must be positive");
  });

  it("passes a pending ack through instead of failing", async () => {
    const fetchFn = (async () => jsonResponse(504, {
      t: "ack", id: "c3", ok: false, pending: true,
    })) as unknown as typeof fetch;
    const client = new ApiClient("http://unused", { fetchFn });
    const ack = await client.command("set_schedule", { on_minutes: 5, off_minutes: 5 }, "c3");
    expect(ack.pending).toBe(true);
  });

  it("polls a pending command by id", async () => {
    const fetchFn = (async (url: RequestInfo | URL) => {
      expect(String(url)).toBe("http://unused/api/command?id=c3");
      return jsonResponse(200, { t: "ack", id: "c3", ok: true });
    }) as unknown as typeof fetch;
    const client = new ApiClient("http://unused", { fetchFn });
    const ack = await client.commandResult("c3");
    expect(ack!.ok).toBe(true);
  });

  it("reports an unknown command id as null", async () => {
    const fetchFn = (async () => jsonResponse(404, { error: "unknown id" })) as unknown as typeof fetch;
    const client = new ApiClient("http://unused", { fetchFn });
    expect(await client.commandResult("nope")).toBeNull();
  });
});
