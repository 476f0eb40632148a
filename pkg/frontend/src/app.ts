/** Page entry point: snapshot, then live stream, then render forever. */

import { GreenhouseStore } from "./store.js";
import { ApiClient } from "./transport.js";
import { CommandCenter } from "./commands.js";
import { Dashboard } from "./render.js";
import { StreamHandle } from "./transport.js";

export interface App {
  store: GreenhouseStore;
  commands: CommandCenter;
  dashboard: Dashboard;
  stream: StreamHandle;
  stop(): void;
}

/**
 * Wire the whole dashboard into `root` against `client`.
 *
 * The page holds no state of its own: a fresh boot rebuilds everything
 * from GET /api/state plus the stream, which replays the retained
 * snapshot on every connect anyway.
 */
export async function boot(
  root: HTMLElement,
  client: ApiClient,
  now: () => number = () => Date.now(),
): Promise<App> {
  const store = new GreenhouseStore();
  const commands = new CommandCenter(client, store);
  const dashboard = new Dashboard(root, store, commands, now);
  store.onChange(() => dashboard.render());

  const snapshot = await client.state();
  store.loadSnapshot(snapshot, now());

  const stream = client.connect(
    "gh/*/*",
    (frame) => {
      store.ingest(frame, now());
      commands.observe(frame);
    },
    (status) => dashboard.setStatus(status),
  );
  const staleTimer = setInterval(() => dashboard.tick(), 1000);

  return {
    store,
    commands,
    dashboard,
    stream,
    stop: () => {
      clearInterval(staleTimer);
      stream.close();
    },
  };
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    void boot(root, new ApiClient(""));
  }
}
