/**
 * Flag and config-file handling for the entry point. Flags win over
 * file values; the file uses the same snake_case spelling as the wire.
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import type { ServerConfig } from "./config.js";
import { buildConfig } from "./config.js";

interface FileConfig {
  backend?: string;
  model_id?: string;
  device?: string;
  port?: number;
  max_batch?: number;
}

function readConfigFile(path: string): FileConfig {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error(`config file ${path} must hold a JSON object`);
  }
  return raw as FileConfig;
}

export function configFromArgv(argv: string[]): ServerConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      backend: { type: "string" },
      "model-id": { type: "string" },
      device: { type: "string" },
      port: { type: "string" },
      "max-batch": { type: "string" },
      config: { type: "string" },
    },
  });
  const file: FileConfig = values.config ? readConfigFile(values.config) : {};
  const backend = values.backend ?? file.backend;
  if (!backend) {
    throw new Error("--backend is required (or set backend in --config)");
  }
  const port = values.port ?? file.port;
  const maxBatch = values["max-batch"] ?? file.max_batch;
  return buildConfig({
    backend,
    modelId: values["model-id"] ?? file.model_id,
    device: values.device ?? file.device,
    port: port === undefined ? undefined : Number(port),
    maxBatch: maxBatch === undefined ? undefined : Number(maxBatch),
  });
}
