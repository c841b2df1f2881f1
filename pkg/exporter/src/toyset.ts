/**
 * Toy frame-dump dataset generator: small PPM videos with class-specific
 * base colors plus per-frame noise, for exporter tests and demos.
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";

import { Image, writePpm } from "./ppm.js";

export interface ToySetOptions {
  classes: string[];
  trainPerClass: number[];
  testPerClass: number[];
  seed: number;
  width?: number;
  height?: number;
  minFrames?: number;
  maxFrames?: number;
}

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

export function makeToySet(root: string, options: ToySetOptions): number {
  const width = options.width ?? 32;
  const height = options.height ?? 24;
  const minFrames = options.minFrames ?? 6;
  const maxFrames = options.maxFrames ?? 14;
  const rand = mulberry32(options.seed);
  let videoCount = 0;

  options.classes.forEach((className, classIndex) => {
    const base = [rand() * 200 + 30, rand() * 200 + 30, rand() * 200 + 30];
    const counts: Array<["train" | "test", number]> = [
      ["train", options.trainPerClass[classIndex]],
      ["test", options.testPerClass[classIndex]],
    ];
    for (const [split, count] of counts) {
      for (let v = 0; v < count; v++) {
        const videoDir = join(root, split, className, `video_${String(v).padStart(3, "0")}`);
        mkdirSync(videoDir, { recursive: true });
        const frames = minFrames + Math.floor(rand() * (maxFrames - minFrames + 1));
        for (let f = 0; f < frames; f++) {
          const data = new Uint8Array(width * height * 3);
          for (let p = 0; p < width * height; p++) {
            for (let k = 0; k < 3; k++) {
              const noisy = base[k] + (rand() - 0.5) * 60;
              data[3 * p + k] = Math.max(0, Math.min(255, Math.round(noisy)));
            }
          }
          const image: Image = { width, height, data };
          writePpm(image, join(videoDir, `frame_${String(f).padStart(4, "0")}.ppm`));
        }
        videoCount++;
      }
    }
  });
  return videoCount;
}
