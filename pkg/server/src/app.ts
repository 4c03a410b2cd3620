/**
 * HTTP layer. Routes validate the wire shapes, gate on backend
 * capabilities, and translate everything abnormal into
 * { error: { code, message } } payloads so clients never have to parse
 * free-form bodies. While the model is loading every route answers 503.
 */

import express from "express";
import type { Express, Request, Response, NextFunction } from "express";
import { z } from "zod";

import type { ModelBackend } from "./backends.js";
import type { ServerConfig } from "./config.js";
import { supportsEmbeddings, supportsGeneration, supportsPairScore } from "./config.js";

const BASE64_SHAPE = /^[A-Za-z0-9+/]+={0,2}$/;

const imageField = z
  .string()
  .min(1)
  .refine((s) => s.length % 4 === 0 && BASE64_SHAPE.test(s), "not valid base64");

const embedImageBody = z.object({ image_b64: imageField });
const embedTextBody = z.object({ text: z.string().trim().min(1) });
const pairScoreBody = z.object({ image_b64: imageField, text: z.string().trim().min(1) });
const generateBody = z.object({
  image_b64: imageField,
  prompt: z.string().min(1),
  max_tokens: z.number().int().min(1),
  temperature: z.number().min(0),
});

function sendError(res: Response, status: number, code: string, message: string): void {
  res.status(status).json({ error: { code, message } });
}

function decodeImage(res: Response, imageB64: string): Buffer | null {
  const image = Buffer.from(imageB64, "base64");
  if (image.length === 0) {
    sendError(res, 400, "bad_request", "image payload decodes to zero bytes");
    return null;
  }
  return image;
}

/** Parse a request body or answer 400 and return null. */
function parse<T>(schema: z.ZodType<T>, req: Request, res: Response): T | null {
  const result = schema.safeParse(req.body);
  if (!result.success) {
    const issue = result.error.issues[0];
    const where = issue.path.join(".") || "body";
    sendError(res, 400, "bad_request", `${where}: ${issue.message}`);
    return null;
  }
  return result.data;
}

export function createApp(
  config: ServerConfig,
  model: ModelBackend,
  loading?: Promise<void>,
): Express {
  const app = express();
  app.use(express.json({ limit: "16mb" }));

  let ready = false;
  (loading ?? model.load()).then(() => {
    ready = true;
  });

  app.use((req: Request, res: Response, next: NextFunction) => {
    if (!ready) {
      sendError(res, 503, "loading", `backend ${config.backend} is still loading`);
      return;
    }
    next();
  });

  app.get("/v1/health", (_req: Request, res: Response) => {
    res.json({ backend: config.backend, model_id: config.modelId });
  });

  app.post("/v1/embed_image", (req: Request, res: Response) => {
    if (!supportsEmbeddings(config.backend)) {
      sendError(res, 400, "unsupported_backend", `${config.backend} does not expose embeddings`);
      return;
    }
    const body = parse(embedImageBody, req, res);
    if (!body) return;
    const image = decodeImage(res, body.image_b64);
    if (!image) return;
    const vector = model.embedImage(image);
    res.json({ vector, dim: vector.length });
  });

  app.post("/v1/embed_text", (req: Request, res: Response) => {
    if (!supportsEmbeddings(config.backend)) {
      sendError(res, 400, "unsupported_backend", `${config.backend} does not expose embeddings`);
      return;
    }
    const body = parse(embedTextBody, req, res);
    if (!body) return;
    const vector = model.embedText(body.text);
    res.json({ vector, dim: vector.length });
  });

  app.post("/v1/pair_score", (req: Request, res: Response) => {
    if (!supportsPairScore(config.backend)) {
      sendError(
        res,
        400,
        "unsupported_backend",
        `${config.backend} has no direct pair scoring; use the embedding endpoints`,
      );
      return;
    }
    const body = parse(pairScoreBody, req, res);
    if (!body) return;
    const image = decodeImage(res, body.image_b64);
    if (!image) return;
    res.json(model.pairScore(image, body.text));
  });

  app.post("/v1/generate", (req: Request, res: Response) => {
    if (!supportsGeneration(config.backend)) {
      sendError(res, 400, "unsupported_backend", `${config.backend} does not generate text`);
      return;
    }
    const body = parse(generateBody, req, res);
    if (!body) return;
    const image = decodeImage(res, body.image_b64);
    if (!image) return;
    const text = model.generate(image, body.prompt, body.max_tokens, body.temperature);
    res.json({ text });
  });

  app.use((_req: Request, res: Response) => {
    sendError(res, 404, "not_found", "no such endpoint");
  });

  // express recognizes error middleware by arity; JSON parse failures land here
  app.use((err: Error, _req: Request, res: Response, _next: NextFunction) => {
    if (err instanceof SyntaxError) {
      sendError(res, 400, "bad_request", "request body is not valid JSON");
      return;
    }
    sendError(res, 500, "internal", err.message);
  });

  return app;
}

export interface RunningServer {
  port: number;
  close(): Promise<void>;
}

/** Bind the app; port 0 in the config picks an ephemeral port. */
export function serve(config: ServerConfig, model: ModelBackend): Promise<RunningServer> {
  const app = createApp(config, model);
  return new Promise((resolve, reject) => {
    const server = app.listen(config.port, "127.0.0.1", () => {
      const address = server.address();
      if (address === null || typeof address === "string") {
        reject(new Error("server bound to a pipe, not a TCP port"));
        return;
      }
      resolve({
        port: address.port,
        close: () =>
          new Promise<void>((done, fail) =>
            server.close((err) => (err ? fail(err) : done())),
          ),
      });
    });
    server.on("error", reject);
  });
}
