/** Minimal binary PPM (P6, maxval <= 255) reader and writer for frame dumps. */

import { readFileSync, writeFileSync } from "node:fs";

export interface Image {
  width: number;
  height: number;
  data: Uint8Array; // RGB, row-major, 3 bytes per pixel
}

export class PpmError extends Error {}

export function decodePpm(buf: Buffer): Image {
  if (buf.length < 2 || buf.toString("ascii", 0, 2) !== "P6") {
    throw new PpmError("not a P6 ppm file");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < buf.length && isSpace(buf[pos])) pos++;
    if (pos < buf.length && buf[pos] === 0x23) {
      // comment line
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !isSpace(buf[pos])) pos++;
    if (start === pos) throw new PpmError("truncated ppm header");
    fields.push(Number(buf.toString("ascii", start, pos)));
  }
  pos++; // the single whitespace byte after maxval
  const [width, height, maxval] = fields;
  if (!Number.isInteger(width) || width < 1 || !Number.isInteger(height) || height < 1) {
    throw new PpmError(`bad ppm dimensions ${width}x${height}`);
  }
  if (maxval !== 255) throw new PpmError(`unsupported maxval ${maxval}`);
  const need = width * height * 3;
  if (buf.length - pos < need) throw new PpmError("truncated ppm payload");
  return { width, height, data: new Uint8Array(buf.subarray(pos, pos + need)) };
}

export function readPpm(path: string): Image {
  return decodePpm(readFileSync(path));
}

export function writePpm(image: Image, path: string): void {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  writeFileSync(path, Buffer.concat([header, Buffer.from(image.data)]));
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
