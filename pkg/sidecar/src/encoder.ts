/** Title encoders.
 *
 * The default `hash-<dim>` encoder is fully deterministic and needs no
 * downloaded weights, which keeps the protocol testable offline. Any other
 * model identifier is treated as a pretrained transformer checkpoint and
 * loaded through @xenova/transformers when it is installed and the weights
 * are available locally; a load failure is fatal before the banner.
 */

import { createHash } from "node:crypto";

export type Pooling = "cls" | "mean";

export interface TitleEncoder {
  readonly id: string;
  readonly dim: number;
  encode(title: string): Promise<number[]>;
}

function tokenize(title: string): string[] {
  return title.toLowerCase().split(/[^\p{L}\p{N}]+/u).filter((t) => t.length > 0);
}

function l2normalize(vec: number[]): number[] {
  const norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0));
  return norm > 0 ? vec.map((v) => v / norm) : vec;
}

/** Deterministic lexical encoder.
 *
 * mean pooling: signed bag of hashed tokens, L2-normalized.
 * cls pooling: a unit vector expanded from the digest of the whole
 * normalized token sequence (a stand-in for a sequence-summary vector).
 */
export class HashEncoder implements TitleEncoder {
  readonly id: string;
  readonly dim: number;
  private readonly pooling: Pooling;

  constructor(dim: number, pooling: Pooling) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`encoder dimension must be a positive integer, got ${dim}`);
    }
    this.dim = dim;
    this.pooling = pooling;
    this.id = `hash-${dim}`;
  }

  async encode(title: string): Promise<number[]> {
    const tokens = tokenize(title);
    if (tokens.length === 0) {
      return new Array(this.dim).fill(0);
    }
    if (this.pooling === "mean") {
      const vec = new Array<number>(this.dim).fill(0);
      for (const token of tokens) {
        const digest = createHash("sha256").update(token, "utf8").digest();
        const index = Number(digest.readBigUInt64BE(0) % BigInt(this.dim));
        const sign = (digest[8] & 1) === 1 ? 1 : -1;
        vec[index] += sign;
      }
      return l2normalize(vec);
    }
    // cls: expand the sequence digest into dim values via counter hashing
    const seed = createHash("sha256").update(tokens.join(" "), "utf8").digest();
    const vec = new Array<number>(this.dim);
    for (let i = 0; i < this.dim; i += 1) {
      const digest = createHash("sha256").update(seed).update(String(i), "utf8").digest();
      // map 8 hash bytes to a value in [-1, 1)
      vec[i] = Number(digest.readBigUInt64BE(0)) / 2 ** 63 - 1;
    }
    return l2normalize(vec);
  }
}

/** Wrapper around a @xenova/transformers feature-extraction pipeline. */
class TransformerEncoder implements TitleEncoder {
  readonly id: string;
  readonly dim: number;
  private readonly pipe: (title: string, options: object) => Promise<{ data: Float32Array }>;
  private readonly pooling: Pooling;

  constructor(id: string, dim: number, pipe: TransformerEncoder["pipe"], pooling: Pooling) {
    this.id = id;
    this.dim = dim;
    this.pipe = pipe;
    this.pooling = pooling;
  }

  async encode(title: string): Promise<number[]> {
    const output = await this.pipe(title, { pooling: this.pooling, normalize: false });
    return Array.from(output.data);
  }
}

const HASH_MODEL = /^hash-(\d+)$/;

export async function loadEncoder(model: string, pooling: Pooling): Promise<TitleEncoder> {
  const hashMatch = HASH_MODEL.exec(model);
  if (hashMatch) {
    return new HashEncoder(Number(hashMatch[1]), pooling);
  }
  // computed specifier: the package is optional and resolved only at runtime
  const specifier = "@xenova/transformers";
  let transformers: any;
  try {
    transformers = await import(specifier);
  } catch (err) {
    throw new Error(`model ${model} needs ${specifier}, which failed to load: ${err}`);
  }
  transformers.env.allowRemoteModels = false;
  const pipe = await transformers.pipeline("feature-extraction", model);
  const probe = await pipe("dimension probe", { pooling, normalize: false });
  return new TransformerEncoder(model, probe.data.length, pipe, pooling);
}
