/**
 * Encoder registry.
 *
 * The toolkit consuming the exported files never learns which encoder
 * produced them (the stores are self-describing in d), so encoders are
 * resolved from identifier strings. `proj-<d>` names the in-tree
 * deterministic reference encoder: fixed image/text featurizers followed
 * by a seeded Gaussian projection to d dimensions, L2-normalized. Adapters
 * for real pretrained vision-language encoders implement the same
 * interface; they are not bundled because model weights cannot be fetched
 * in offline environments.
 */

import { Image } from "./ppm.js";

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  encodeImage(image: Image): Float64Array;
  encodeText(text: string): Float64Array;
}

const GRID = 8; // luma pooling grid for the image featurizer
const TEXT_BUCKETS = 128; // character-trigram hash buckets

export function resolveEncoder(id: string): Encoder {
  const match = /^proj-(\d+)$/.exec(id);
  if (match) {
    const dim = Number(match[1]);
    if (dim < 1 || dim > 4096) throw new RangeError(`encoder dim out of range: ${dim}`);
    return new SeededProjectionEncoder(id, dim);
  }
  throw new Error(
    `unknown encoder ${JSON.stringify(id)}; available: proj-<dim> (deterministic reference)`,
  );
}

/** fnv-1a, for deriving stable 32-bit seeds from strings. */
function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** mulberry32: tiny deterministic PRNG over a 32-bit state. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianMatrix(seed: number, rows: number, cols: number): Float64Array {
  const rand = mulberry32(seed);
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i += 2) {
    // Box-Muller; u clamped away from 0
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2.0 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v);
    if (i + 1 < out.length) out[i + 1] = r * Math.sin(2 * Math.PI * v);
  }
  return out;
}

function project(matrix: Float64Array, input: Float64Array, dim: number): Float64Array {
  const out = new Float64Array(dim);
  const cols = input.length;
  for (let r = 0; r < dim; r++) {
    let acc = 0;
    const base = r * cols;
    for (let c = 0; c < cols; c++) acc += matrix[base + c] * input[c];
    out[r] = acc;
  }
  let norm = Math.hypot(...out);
  if (norm === 0) {
    out[0] = 1; // degenerate input maps to a fixed unit vector
    norm = 1;
  }
  for (let r = 0; r < dim; r++) out[r] /= norm;
  return out;
}

class SeededProjectionEncoder implements Encoder {
  readonly id: string;
  readonly dim: number;
  private readonly imageMatrix: Float64Array;
  private readonly textMatrix: Float64Array;

  constructor(id: string, dim: number) {
    this.id = id;
    this.dim = dim;
    const seed = fnv1a(id);
    this.imageMatrix = gaussianMatrix(seed ^ 0x9e3779b9, dim, GRID * GRID + 3);
    this.textMatrix = gaussianMatrix(seed ^ 0x7f4a7c15, dim, TEXT_BUCKETS);
  }

  encodeImage(image: Image): Float64Array {
    const { width, height, data } = image;
    const features = new Float64Array(GRID * GRID + 3);
    const counts = new Float64Array(GRID * GRID);
    for (let y = 0; y < height; y++) {
      const gy = Math.min(GRID - 1, Math.floor((y * GRID) / height));
      for (let x = 0; x < width; x++) {
        const gx = Math.min(GRID - 1, Math.floor((x * GRID) / width));
        const o = 3 * (y * width + x);
        const r = data[o];
        const g = data[o + 1];
        const b = data[o + 2];
        const luma = (0.299 * r + 0.587 * g + 0.114 * b) / 255;
        const cell = gy * GRID + gx;
        features[cell] += luma;
        counts[cell] += 1;
        features[GRID * GRID] += r / 255;
        features[GRID * GRID + 1] += g / 255;
        features[GRID * GRID + 2] += b / 255;
      }
    }
    for (let cell = 0; cell < GRID * GRID; cell++) {
      if (counts[cell] > 0) features[cell] /= counts[cell];
    }
    const pixels = width * height;
    for (let k = 0; k < 3; k++) features[GRID * GRID + k] /= pixels;
    return project(this.imageMatrix, features, this.dim);
  }

  encodeText(text: string): Float64Array {
    const features = new Float64Array(TEXT_BUCKETS);
    const padded = `${text.toLowerCase()}`;
    for (let i = 0; i + 3 <= padded.length; i++) {
      features[fnv1a(padded.slice(i, i + 3)) % TEXT_BUCKETS] += 1;
    }
    const total = features.reduce((a, b) => a + b, 0);
    if (total > 0) for (let i = 0; i < TEXT_BUCKETS; i++) features[i] /= total;
    return project(this.textMatrix, features, this.dim);
  }
}
