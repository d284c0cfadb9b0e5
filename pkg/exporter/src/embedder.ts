/**
 * Deterministic contextual embedder.
 *
 * Real bidirectional-LSTM embedders are multi-gigabyte downloads; this module
 * reproduces their *interface* — L+1 layers of per-token vectors where layer 0
 * depends on the token alone and deeper layers mix in surrounding context —
 * with values derived purely from hashes.  Same input, same model id, same
 * bytes, on every machine.  That makes the exporter's output contract (and
 * everything downstream of the store file) testable without model weights; a
 * weights-backed embedder only has to implement `embedPost`.
 */

import { createHash } from "node:crypto";

import type { PostTokens } from "./tokens.js";

export interface ModelProfile {
  id: string;
  /** per-token vector width D */
  dimension: number;
  /** layer count L+1, counting the context-independent input layer */
  layers: number;
}

export const MODEL_PROFILES: Record<string, ModelProfile> = {
  "lstm-2x4096-5.5b": { id: "lstm-2x4096-5.5b", dimension: 1024, layers: 3 },
  small: { id: "small", dimension: 256, layers: 3 },
  tiny: { id: "tiny", dimension: 16, layers: 3 },
};

export const DEFAULT_MODEL = "lstm-2x4096-5.5b";
export const EMPTY_TOKEN = "<empty>";

export class ModelLoadError extends Error {}

export function loadModel(modelId: string): Embedder {
  const profile = MODEL_PROFILES[modelId];
  if (profile === undefined) {
    const known = Object.keys(MODEL_PROFILES).join(", ");
    throw new ModelLoadError(`unknown model ${JSON.stringify(modelId)}; available: ${known}`);
  }
  return new Embedder(profile);
}

function seedOf(key: string): number {
  return createHash("sha256").update(key, "utf8").digest().readUInt32LE(0);
}

/** mulberry32: tiny, fast, and identical across platforms. */
function prng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface EmbeddedPost {
  id: string;
  tokenCount: number;
  /** flat (layers × tokenCount × dimension), layer-major, token-major */
  values: Float32Array;
}

export class Embedder {
  constructor(readonly profile: ModelProfile) {}

  /** Seed key for one token slot. Layer 0 sees only the token itself; layer j
   * sees the position and a ±j token window, so deeper layers are more
   * context-sensitive. */
  private seedKey(layer: number, position: number, tokens: string[]): string {
    if (layer === 0) {
      return [this.profile.id, "0", tokens[position]].join("");
    }
    const window = tokens.slice(Math.max(0, position - layer), position + layer + 1);
    return [this.profile.id, String(layer), String(position), ...window].join("");
  }

  embedPost(tokens: string[]): Float32Array {
    const { dimension, layers } = this.profile;
    const count = tokens.length;
    const values = new Float32Array(layers * count * dimension);
    for (let layer = 0; layer < layers; layer++) {
      for (let k = 0; k < count; k++) {
        if (tokens[k] === EMPTY_TOKEN) {
          continue; // placeholder stays all-zero on every layer
        }
        const next = prng(seedOf(this.seedKey(layer, k, tokens)));
        const base = (layer * count + k) * dimension;
        for (let i = 0; i < dimension; i++) {
          values[base + i] = next() * 2 - 1;
        }
      }
    }
    return values;
  }

  embedBatch(posts: PostTokens[]): EmbeddedPost[] {
    return posts.map((post) => ({
      id: post.id,
      tokenCount: post.tokens.length,
      values: this.embedPost(post.tokens),
    }));
  }
}
