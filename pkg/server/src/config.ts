/**
 * Server configuration. One process serves exactly one backend; the
 * backend name decides which endpoints exist (embedding vs. direct
 * pair probability vs. text generation).
 */

export const EMBEDDING_BACKENDS = ["negclip", "clip", "siglip"] as const;
export const PAIR_SCORE_BACKENDS = ["siglip", "blip2_itm"] as const;
export const GENERATION_BACKENDS = ["vlm"] as const;

export type BackendName =
  | (typeof EMBEDDING_BACKENDS)[number]
  | (typeof PAIR_SCORE_BACKENDS)[number]
  | (typeof GENERATION_BACKENDS)[number];

export const ALL_BACKENDS: readonly BackendName[] = [
  "negclip",
  "clip",
  "siglip",
  "blip2_itm",
  "vlm",
];

/** Pair-probability flavor per backend that supports it. */
export const PAIR_SCORE_METHODS: Record<string, string> = {
  siglip: "sigmoid_prob",
  blip2_itm: "itm_prob",
};

// Checkpoint identities the stand-in models answer for by default.
const DEFAULT_MODEL_IDS: Record<BackendName, string> = {
  negclip: "negclip-vit-b-32",
  clip: "clip-vit-l-14",
  siglip: "siglip-base-patch16",
  blip2_itm: "blip2-itm-base",
  vlm: "vlm-onevision-7b",
};

export interface ServerConfig {
  backend: BackendName;
  modelId: string;
  device: string;
  port: number;
  maxBatch: number;
}

export function defaultModelId(backend: BackendName): string {
  return DEFAULT_MODEL_IDS[backend];
}

export function isBackendName(value: string): value is BackendName {
  return (ALL_BACKENDS as readonly string[]).includes(value);
}

/**
 * Validate raw settings into a ServerConfig. Port 0 is allowed and
 * means "pick an ephemeral port at bind time".
 */
export function buildConfig(raw: {
  backend: string;
  modelId?: string;
  device?: string;
  port?: number;
  maxBatch?: number;
}): ServerConfig {
  if (!isBackendName(raw.backend)) {
    throw new Error(
      `unknown backend "${raw.backend}"; expected one of ${ALL_BACKENDS.join(", ")}`,
    );
  }
  const port = raw.port ?? 8090;
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    throw new Error(`port must be an integer in [0, 65535], got ${port}`);
  }
  const maxBatch = raw.maxBatch ?? 8;
  if (!Number.isInteger(maxBatch) || maxBatch < 1) {
    throw new Error(`maxBatch must be >= 1, got ${maxBatch}`);
  }
  return {
    backend: raw.backend,
    modelId: raw.modelId || defaultModelId(raw.backend),
    device: raw.device || "cpu",
    port,
    maxBatch,
  };
}

export function supportsEmbeddings(backend: BackendName): boolean {
  return (EMBEDDING_BACKENDS as readonly string[]).includes(backend);
}

export function supportsPairScore(backend: BackendName): boolean {
  return backend in PAIR_SCORE_METHODS;
}

export function supportsGeneration(backend: BackendName): boolean {
  return (GENERATION_BACKENDS as readonly string[]).includes(backend);
}
