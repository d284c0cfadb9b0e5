/**
 * Binary layered-embedding store, shared with the training pipeline.
 *
 * Little-endian throughout.  Header (22 bytes): magic "CLRE", version u16,
 * dimension u32, layer count u32, entry count u64.  Then per post: id byte
 * length u16, UTF-8 id, token count u16, and layers × tokens × dimension
 * float32 values in layer-major, token-major order.
 */

import { closeSync, openSync, readFileSync, writeSync } from "node:fs";
import { endianness } from "node:os";

import type { EmbeddedPost } from "./embedder.js";

export const STORE_MAGIC = "CLRE";
export const STORE_VERSION = 1;
export const HEADER_BYTES = 22;

export class StoreFormatError extends Error {}

function header(dimension: number, layers: number, count: bigint): Buffer {
  const buf = Buffer.alloc(HEADER_BYTES);
  buf.write(STORE_MAGIC, 0, "ascii");
  buf.writeUInt16LE(STORE_VERSION, 4);
  buf.writeUInt32LE(dimension, 6);
  buf.writeUInt32LE(layers, 10);
  buf.writeBigUInt64LE(count, 14);
  return buf;
}

function floatsToLE(values: Float32Array): Buffer {
  if (endianness() === "LE") {
    return Buffer.from(values.buffer, values.byteOffset, values.byteLength);
  }
  const out = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    out.writeFloatLE(values[i], i * 4);
  }
  return out;
}

/**
 * Incremental writer: entries stream out batch by batch and the entry count
 * in the header is patched on close, so large exports never buffer the whole
 * store in memory.
 */
export class StoreWriter {
  private fd: number;
  private count = 0n;
  private closed = false;

  constructor(
    path: string,
    readonly dimension: number,
    readonly layers: number,
  ) {
    this.fd = openSync(path, "w");
    writeSync(this.fd, header(dimension, layers, 0n));
  }

  add(entry: EmbeddedPost): void {
    const idBytes = Buffer.from(entry.id, "utf8");
    if (idBytes.length === 0 || idBytes.length > 0xffff) {
      throw new StoreFormatError(`post id length ${idBytes.length} outside [1, 65535]`);
    }
    if (entry.tokenCount < 1 || entry.tokenCount > 0xffff) {
      throw new StoreFormatError(`post ${entry.id}: token count ${entry.tokenCount} outside [1, 65535]`);
    }
    const expected = this.layers * entry.tokenCount * this.dimension;
    if (entry.values.length !== expected) {
      throw new StoreFormatError(
        `post ${entry.id}: ${entry.values.length} values for ${entry.tokenCount} tokens, expected ${expected}`,
      );
    }
    const prefix = Buffer.alloc(2 + idBytes.length + 2);
    prefix.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(prefix, 2);
    prefix.writeUInt16LE(entry.tokenCount, 2 + idBytes.length);
    writeSync(this.fd, prefix);
    writeSync(this.fd, floatsToLE(entry.values));
    this.count += 1n;
  }

  close(): bigint {
    if (!this.closed) {
      writeSync(this.fd, header(this.dimension, this.layers, this.count), 0, HEADER_BYTES, 0);
      closeSync(this.fd);
      this.closed = true;
    }
    return this.count;
  }
}

export interface StoreContents {
  dimension: number;
  layers: number;
  entries: EmbeddedPost[];
}

/** Strict reader used by the tests; rejects anything the format forbids. */
export function readStore(path: string): StoreContents {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new StoreFormatError("truncated header");
  }
  if (buf.toString("ascii", 0, 4) !== STORE_MAGIC) {
    throw new StoreFormatError(`bad magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== STORE_VERSION) {
    throw new StoreFormatError(`unsupported version ${version}`);
  }
  const dimension = buf.readUInt32LE(6);
  const layers = buf.readUInt32LE(10);
  const count = buf.readBigUInt64LE(14);
  const entries: EmbeddedPost[] = [];
  let offset = HEADER_BYTES;
  for (let i = 0n; i < count; i++) {
    if (offset + 2 > buf.length) throw new StoreFormatError("truncated entry");
    const idLen = buf.readUInt16LE(offset);
    offset += 2;
    if (offset + idLen + 2 > buf.length) throw new StoreFormatError("truncated entry");
    const id = buf.toString("utf8", offset, offset + idLen);
    offset += idLen;
    const tokenCount = buf.readUInt16LE(offset);
    offset += 2;
    const byteLen = layers * tokenCount * dimension * 4;
    if (offset + byteLen > buf.length) throw new StoreFormatError(`truncated values for post ${id}`);
    const values = new Float32Array(layers * tokenCount * dimension);
    for (let v = 0; v < values.length; v++) {
      values[v] = buf.readFloatLE(offset + v * 4);
    }
    offset += byteLen;
    entries.push({ id, tokenCount, values });
  }
  if (offset !== buf.length) {
    throw new StoreFormatError(`${buf.length - offset} trailing bytes after the last entry`);
  }
  return { dimension, layers, entries };
}
