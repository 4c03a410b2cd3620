/**
 * Stand-in model backends.
 *
 * Real checkpoints are not part of this repository, so every backend
 * here is a deterministic hash model: embeddings are unit vectors
 * seeded by the input bytes, pair probabilities are hash-uniform, and
 * generation picks from a fixed phrase list. The point is to serve the
 * exact wire contract with reproducible values; a torch-backed adapter
 * can replace HashModel without touching the HTTP layer.
 */

import { createHash, randomUUID } from "node:crypto";

import type { BackendName } from "./config.js";
import { PAIR_SCORE_METHODS } from "./config.js";

export interface ModelBackend {
  readonly backend: BackendName;
  readonly modelId: string;
  readonly dim: number;
  /** Resolves once the model is ready to answer. */
  load(): Promise<void>;
  embedImage(image: Buffer): number[];
  embedText(text: string): number[];
  pairScore(image: Buffer, text: string): { score: number; method: string };
  generate(image: Buffer, prompt: string, maxTokens: number, temperature: number): string;
}

const CANNED_PHRASES = [
  "carrying",
  "sitting on",
  "parked beside",
  "looking at",
  "attached to",
  "walking across",
  "leaning on",
  "no relation",
  "is wearing a",
  "held by",
];

function sha256(parts: Array<Buffer | string>): Buffer {
  const hash = createHash("sha256");
  for (const part of parts) {
    hash.update(part);
  }
  return hash.digest();
}

/** Uniform in [0, 1) from the first 8 bytes of a hash. */
function hashUniform(parts: Array<Buffer | string>): number {
  const digest = sha256(parts);
  return Number(digest.readBigUInt64BE(0)) / 2 ** 64;
}

/**
 * Deterministic unit vector: hash blocks expand the seed into floats in
 * [-1, 1), then the vector is L2-normalized. Same input, same vector,
 * across processes and platforms.
 */
function hashUnitVector(seed: string, dim: number): number[] {
  const values: number[] = [];
  let block = 0;
  while (values.length < dim) {
    const digest = sha256([seed, `:${block}`]);
    for (let offset = 0; offset + 8 <= digest.length && values.length < dim; offset += 8) {
      const raw = Number(digest.readBigUInt64BE(offset)) / 2 ** 64;
      values.push(raw * 2 - 1);
    }
    block += 1;
  }
  const norm = Math.sqrt(values.reduce((acc, v) => acc + v * v, 0));
  return values.map((v) => v / norm);
}

export class HashModel implements ModelBackend {
  readonly backend: BackendName;
  readonly modelId: string;
  readonly dim: number;

  constructor(backend: BackendName, modelId: string, dim = 64) {
    if (dim < 2) {
      throw new Error(`embedding dim must be >= 2, got ${dim}`);
    }
    this.backend = backend;
    this.modelId = modelId;
    this.dim = dim;
  }

  async load(): Promise<void> {
    // nothing to fetch; a checkpoint-backed adapter would await it here
  }

  embedImage(image: Buffer): number[] {
    const digest = sha256([image]).toString("hex");
    return hashUnitVector(`${this.backend}:${this.modelId}:image:${digest}`, this.dim);
  }

  embedText(text: string): number[] {
    return hashUnitVector(`${this.backend}:${this.modelId}:text:${text}`, this.dim);
  }

  pairScore(image: Buffer, text: string): { score: number; method: string } {
    const method = PAIR_SCORE_METHODS[this.backend];
    if (!method) {
      throw new Error(`backend ${this.backend} has no direct pair scoring`);
    }
    const digest = sha256([image]).toString("hex");
    const score = hashUniform([`${this.backend}:${this.modelId}:pair:${digest}:${text}`]);
    return { score, method };
  }

  generate(image: Buffer, prompt: string, maxTokens: number, temperature: number): string {
    const digest = sha256([image]).toString("hex");
    // nonzero temperature is explicitly non-reproducible; the client
    // only ever retries temperature-0 requests
    const salt = temperature > 0 ? randomUUID() : "";
    const pick = hashUniform([`${this.backend}:gen:${digest}:${prompt}:${salt}`]);
    const phrase = CANNED_PHRASES[Math.floor(pick * CANNED_PHRASES.length)];
    const words = phrase.split(" ");
    return words.slice(0, Math.max(1, maxTokens)).join(" ");
  }
}
