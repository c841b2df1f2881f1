/** Uniform frame sampling with half-open centering. */

/**
 * Indices of the frames to sample from a video of `length` frames:
 * floor((i + 0.5) * length / count) for i in 0..count-1.
 *
 * A video shorter than `count` yields repeated indices.
 */
export function frameIndices(length: number, count: number): number[] {
  if (!Number.isInteger(length) || length < 1) {
    throw new RangeError(`video length must be a positive integer, got ${length}`);
  }
  if (!Number.isInteger(count) || count < 1) {
    throw new RangeError(`frame count must be a positive integer, got ${count}`);
  }
  const out: number[] = [];
  for (let i = 0; i < count; i++) {
    out.push(Math.floor(((i + 0.5) * length) / count));
  }
  return out;
}
