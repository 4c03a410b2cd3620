import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { createApp, serve } from "../src/app.js";
import type { RunningServer } from "../src/app.js";
import { HashModel } from "../src/backends.js";
import type { BackendName } from "../src/config.js";
import { buildConfig } from "../src/config.js";

const IMAGE_B64 = Buffer.from("stable fake image bytes").toString("base64");

async function startBackend(backend: BackendName): Promise<{ url: string; stop: () => Promise<void> }> {
  const config = buildConfig({ backend, port: 0 });
  const running: RunningServer = await serve(config, new HashModel(backend, config.modelId));
  const url = `http://127.0.0.1:${running.port}`;
  // serve() readies the hash model in a microtask; wait for the flip
  for (let i = 0; i < 50; i += 1) {
    const res = await fetch(`${url}/v1/health`);
    if (res.status === 200) break;
    await new Promise((r) => setTimeout(r, 10));
  }
  return { url, stop: running.close };
}

async function post(url: string, path: string, body: unknown): Promise<Response> {
  return fetch(`${url}${path}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

describe("embedding backend over HTTP", () => {
  let url = "";
  let stop: () => Promise<void>;

  beforeAll(async () => {
    ({ url, stop } = await startBackend("clip"));
  });
  afterAll(() => stop());

  it("reports health with backend and model identity", async () => {
    const res = await fetch(`${url}/v1/health`);
    expect(res.status).toBe(200);
    expect(await res.json()).toEqual({ backend: "clip", model_id: "clip-vit-l-14" });
  });

  it("embeds the same text to the same vector", async () => {
    const first = await (await post(url, "/v1/embed_text", { text: "dog holding frisbee" })).json();
    const second = await (await post(url, "/v1/embed_text", { text: "dog holding frisbee" })).json();
    expect(first).toEqual(second);
    expect(first.dim).toBe(first.vector.length);
  });

  it("embeds images as unit vectors", async () => {
    const res = await post(url, "/v1/embed_image", { image_b64: IMAGE_B64 });
    expect(res.status).toBe(200);
    const data = await res.json();
    const norm = Math.sqrt(data.vector.reduce((acc: number, v: number) => acc + v * v, 0));
    expect(norm).toBeCloseTo(1.0, 6);
  });

  it("rejects pair scoring on a cosine-only backend", async () => {
    const res = await post(url, "/v1/pair_score", { image_b64: IMAGE_B64, text: "dog" });
    expect(res.status).toBe(400);
    const data = await res.json();
    expect(data.error.code).toBe("unsupported_backend");
    expect(typeof data.error.message).toBe("string");
  });

  it("rejects generation", async () => {
    const res = await post(url, "/v1/generate", {
      image_b64: IMAGE_B64,
      prompt: "p",
      max_tokens: 8,
      temperature: 0,
    });
    expect(res.status).toBe(400);
    expect((await res.json()).error.code).toBe("unsupported_backend");
  });

  it("answers 400 with a structured payload on bad input", async () => {
    const missing = await post(url, "/v1/embed_image", {});
    expect(missing.status).toBe(400);
    expect((await missing.json()).error.code).toBe("bad_request");

    const notB64 = await post(url, "/v1/embed_image", { image_b64: "@@@" });
    expect(notB64.status).toBe(400);

    const emptyText = await post(url, "/v1/embed_text", { text: "   " });
    expect(emptyText.status).toBe(400);

    const badJson = await fetch(`${url}/v1/embed_text`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{not json",
    });
    expect(badJson.status).toBe(400);
    expect((await badJson.json()).error.code).toBe("bad_request");
  });

  it("answers 404 with a structured payload off the contract", async () => {
    const res = await fetch(`${url}/v1/nope`);
    expect(res.status).toBe(404);
    expect((await res.json()).error.code).toBe("not_found");
  });
});

describe("pair-probability backends over HTTP", () => {
  it("siglip returns sigmoid probabilities", async () => {
    const { url, stop } = await startBackend("siglip");
    try {
      const res = await post(url, "/v1/pair_score", { image_b64: IMAGE_B64, text: "dog on rug" });
      expect(res.status).toBe(200);
      const data = await res.json();
      expect(data.method).toBe("sigmoid_prob");
      expect(data.score).toBeGreaterThanOrEqual(0);
      expect(data.score).toBeLessThan(1);
    } finally {
      await stop();
    }
  });

  it("blip2_itm returns itm probabilities and no embeddings", async () => {
    const { url, stop } = await startBackend("blip2_itm");
    try {
      const scored = await post(url, "/v1/pair_score", { image_b64: IMAGE_B64, text: "dog on rug" });
      expect((await scored.json()).method).toBe("itm_prob");
      const embed = await post(url, "/v1/embed_text", { text: "dog" });
      expect(embed.status).toBe(400);
      expect((await embed.json()).error.code).toBe("unsupported_backend");
    } finally {
      await stop();
    }
  });

  it("scores identically alone and under concurrent load", async () => {
    const { url, stop } = await startBackend("siglip");
    try {
      const body = { image_b64: IMAGE_B64, text: "dog on rug" };
      const solo = (await (await post(url, "/v1/pair_score", body)).json()).score;
      const burst = await Promise.all(
        Array.from({ length: 16 }, (_, i) =>
          post(url, "/v1/pair_score", i % 2 ? body : { image_b64: IMAGE_B64, text: `filler ${i}` }),
        ),
      );
      for (let i = 0; i < burst.length; i += 1) {
        const data = await burst[i].json();
        if (i % 2) {
          expect(Math.abs(data.score - solo)).toBeLessThan(1e-5);
        }
      }
    } finally {
      await stop();
    }
  });
});

describe("generation backend over HTTP", () => {
  it("answers deterministically at temperature 0", async () => {
    const { url, stop } = await startBackend("vlm");
    try {
      const body = { image_b64: IMAGE_B64, prompt: "what relates them?", max_tokens: 8, temperature: 0 };
      const first = await (await post(url, "/v1/generate", body)).json();
      const second = await (await post(url, "/v1/generate", body)).json();
      expect(first).toEqual(second);
      expect(typeof first.text).toBe("string");
      expect(first.text.length).toBeGreaterThan(0);
    } finally {
      await stop();
    }
  });

  it("validates generation parameters", async () => {
    const { url, stop } = await startBackend("vlm");
    try {
      const res = await post(url, "/v1/generate", {
        image_b64: IMAGE_B64,
        prompt: "p",
        max_tokens: 0,
        temperature: 0,
      });
      expect(res.status).toBe(400);
    } finally {
      await stop();
    }
  });
});

describe("loading state", () => {
  it("serves 503 everywhere until the model is ready", async () => {
    const config = buildConfig({ backend: "clip", port: 0 });
    const model = new HashModel("clip", config.modelId);
    let release = () => {};
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const app = createApp(config, model, gate);
    const server = app.listen(0, "127.0.0.1");
    await new Promise((resolve) => server.once("listening", resolve));
    const address = server.address();
    if (address === null || typeof address === "string") throw new Error("no port");
    const url = `http://127.0.0.1:${address.port}`;
    try {
      const res = await fetch(`${url}/v1/health`);
      expect(res.status).toBe(503);
      expect((await res.json()).error.code).toBe("loading");

      release();
      let ready = false;
      for (let i = 0; i < 50 && !ready; i += 1) {
        ready = (await fetch(`${url}/v1/health`)).status === 200;
        if (!ready) await new Promise((r) => setTimeout(r, 10));
      }
      expect(ready).toBe(true);
    } finally {
      await new Promise<void>((resolve, reject) =>
        server.close((err) => (err ? reject(err) : resolve())),
      );
    }
  });
});
