/**
 * Entry point: flags (optionally layered over a JSON config file) pick
 * the backend, then the process serves it until killed.
 *
 *   node dist/index.js --backend siglip --port 8090
 *   node dist/index.js --config server.json --port 0
 *
 * Port 0 binds an ephemeral port; the actual port is printed on the
 * "listening" line so wrappers can scrape it.
 */

import { serve } from "./app.js";
import { HashModel } from "./backends.js";
import { configFromArgv } from "./cli.js";

async function main(): Promise<void> {
  const config = configFromArgv(process.argv.slice(2));
  const model = new HashModel(config.backend, config.modelId);
  const running = await serve(config, model);
  console.log(
    `listening on http://127.0.0.1:${running.port} backend=${config.backend} model=${config.modelId}`,
  );
  const shutdown = () => {
    running.close().then(() => process.exit(0));
  };
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

main().catch((err) => {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exit(1);
});
