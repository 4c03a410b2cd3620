import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { configFromArgv } from "../src/cli.js";
import {
  buildConfig,
  defaultModelId,
  supportsEmbeddings,
  supportsGeneration,
  supportsPairScore,
} from "../src/config.js";

describe("buildConfig", () => {
  it("fills defaults per backend", () => {
    const config = buildConfig({ backend: "siglip" });
    expect(config.modelId).toBe(defaultModelId("siglip"));
    expect(config.device).toBe("cpu");
    expect(config.port).toBe(8090);
    expect(config.maxBatch).toBe(8);
  });

  it("rejects unknown backends", () => {
    expect(() => buildConfig({ backend: "gpt" })).toThrow(/unknown backend "gpt"/);
  });

  it("validates the port", () => {
    expect(() => buildConfig({ backend: "clip", port: -1 })).toThrow(/port/);
    expect(() => buildConfig({ backend: "clip", port: 70000 })).toThrow(/port/);
    expect(() => buildConfig({ backend: "clip", port: 1.5 })).toThrow(/port/);
    expect(buildConfig({ backend: "clip", port: 0 }).port).toBe(0);
  });

  it("validates maxBatch", () => {
    expect(() => buildConfig({ backend: "clip", maxBatch: 0 })).toThrow(/maxBatch/);
    expect(buildConfig({ backend: "clip", maxBatch: 1 }).maxBatch).toBe(1);
  });
});

describe("capabilities", () => {
  it("siglip scores pairs and embeds", () => {
    expect(supportsEmbeddings("siglip")).toBe(true);
    expect(supportsPairScore("siglip")).toBe(true);
    expect(supportsGeneration("siglip")).toBe(false);
  });

  it("clip and negclip embed only", () => {
    for (const backend of ["clip", "negclip"] as const) {
      expect(supportsEmbeddings(backend)).toBe(true);
      expect(supportsPairScore(backend)).toBe(false);
      expect(supportsGeneration(backend)).toBe(false);
    }
  });

  it("blip2_itm scores pairs only", () => {
    expect(supportsEmbeddings("blip2_itm")).toBe(false);
    expect(supportsPairScore("blip2_itm")).toBe(true);
  });

  it("vlm generates only", () => {
    expect(supportsEmbeddings("vlm")).toBe(false);
    expect(supportsGeneration("vlm")).toBe(true);
  });
});

describe("configFromArgv", () => {
  it("reads flags", () => {
    const config = configFromArgv([
      "--backend", "blip2_itm",
      "--model-id", "itm-large",
      "--port", "0",
      "--max-batch", "2",
      "--device", "cuda:0",
    ]);
    expect(config.backend).toBe("blip2_itm");
    expect(config.modelId).toBe("itm-large");
    expect(config.port).toBe(0);
    expect(config.maxBatch).toBe(2);
    expect(config.device).toBe("cuda:0");
  });

  it("layers flags over a config file", () => {
    const dir = mkdtempSync(join(tmpdir(), "srvcfg-"));
    const path = join(dir, "server.json");
    writeFileSync(path, JSON.stringify({ backend: "clip", port: 9999, max_batch: 4 }));
    const config = configFromArgv(["--config", path, "--port", "0"]);
    expect(config.backend).toBe("clip");
    expect(config.port).toBe(0);
    expect(config.maxBatch).toBe(4);
  });

  it("requires a backend from somewhere", () => {
    expect(() => configFromArgv(["--port", "0"])).toThrow(/--backend is required/);
  });

  it("rejects a non-object config file", () => {
    const dir = mkdtempSync(join(tmpdir(), "srvcfg-"));
    const path = join(dir, "list.json");
    writeFileSync(path, "[1, 2]");
    expect(() => configFromArgv(["--config", path])).toThrow(/JSON object/);
  });
});
