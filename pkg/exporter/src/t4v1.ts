/**
 * T4V1 binary feature-store format (little-endian):
 *
 *   bytes 0..3   magic "T4V1"
 *   bytes 4..7   version (u32, currently 1)
 *   bytes 8..11  n  (u32, videos)
 *   bytes 12..15 T  (u32, frames per video)
 *   bytes 16..19 d  (u32, embedding dimension)
 *   then         labels  (n x u32)
 *   then         payload (n*T*d x f32, row-major [video][frame][dim])
 *   trailer      crc32 of the payload bytes (u32)
 */

import { readFileSync, writeFileSync } from "node:fs";
import { crc32 } from "node:zlib";

export const MAGIC = "T4V1";
export const VERSION = 1;

export interface Store {
  n: number;
  frames: number;
  dim: number;
  labels: Uint32Array;
  payload: Float32Array; // length n * frames * dim
}

export class FormatError extends Error {}

export function encodeStore(store: Store): Buffer {
  const { n, frames, dim, labels, payload } = store;
  if (labels.length !== n) {
    throw new FormatError(`labels length ${labels.length} does not match n=${n}`);
  }
  if (payload.length !== n * frames * dim) {
    throw new FormatError(
      `payload length ${payload.length} does not match n*T*d=${n * frames * dim}`,
    );
  }
  const buf = Buffer.alloc(20 + 4 * n + 4 * payload.length + 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeUInt32LE(n, 8);
  buf.writeUInt32LE(frames, 12);
  buf.writeUInt32LE(dim, 16);
  let pos = 20;
  for (const label of labels) {
    buf.writeUInt32LE(label, pos);
    pos += 4;
  }
  const payloadStart = pos;
  for (const value of payload) {
    buf.writeFloatLE(value, pos);
    pos += 4;
  }
  const crc = crc32(buf.subarray(payloadStart, pos)) >>> 0;
  buf.writeUInt32LE(crc, pos);
  return buf;
}

export function writeStore(store: Store, path: string): void {
  writeFileSync(path, encodeStore(store));
}

export function decodeStore(buf: Buffer): Store {
  if (buf.length < 20) throw new FormatError("file shorter than the T4V1 header");
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new FormatError(`unsupported version ${version}`);
  const n = buf.readUInt32LE(8);
  const frames = buf.readUInt32LE(12);
  const dim = buf.readUInt32LE(16);
  const labelsEnd = 20 + 4 * n;
  const payloadEnd = labelsEnd + 4 * n * frames * dim;
  if (buf.length !== payloadEnd + 4) {
    throw new FormatError(
      `file length ${buf.length} does not match header (expected ${payloadEnd + 4})`,
    );
  }
  const stored = buf.readUInt32LE(payloadEnd);
  const computed = crc32(buf.subarray(labelsEnd, payloadEnd)) >>> 0;
  if (stored !== computed) {
    throw new FormatError(
      `payload CRC mismatch: stored ${stored.toString(16)}, computed ${computed.toString(16)}`,
    );
  }
  const labels = new Uint32Array(n);
  for (let i = 0; i < n; i++) labels[i] = buf.readUInt32LE(20 + 4 * i);
  const payload = new Float32Array(n * frames * dim);
  for (let i = 0; i < payload.length; i++) payload[i] = buf.readFloatLE(labelsEnd + 4 * i);
  return { n, frames, dim, labels, payload };
}

export function readStore(path: string): Store {
  return decodeStore(readFileSync(path));
}
