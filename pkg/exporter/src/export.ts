/**
 * Export jobs: walk a frame-dump dataset, run the encoder over uniformly
 * sampled frames, and write T4V1 stores plus a manifest the consuming
 * toolkit loads directly.
 *
 * Dataset layout on disk:
 *
 *   <root>/<split>/<class name>/<video id>/*.ppm
 *
 * where split is "train" or "test" and each video is a directory of
 * P6 frame files (sorted lexicographically = temporal order).
 */

import { mkdirSync, readdirSync, statSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Encoder, resolveEncoder } from "./encoders.js";
import { frameIndices } from "./frames.js";
import { readPpm } from "./ppm.js";
import { Store, writeStore } from "./t4v1.js";

export interface ExportJob {
  root: string;
  frames: number; // T
  encoderId: string;
  outDir: string;
  datasetName: string;
  classNames?: string[]; // default: train-split directories, sorted
  template: string; // prompt template with exactly one {} placeholder
}

export const DEFAULT_TEMPLATE = "a video of a person {}.";

export interface SplitResult {
  n: number;
  skipped: string[];
}

export interface ExportReport {
  dataset: string;
  encoder: string;
  dim: number;
  frames: number;
  classNames: string[];
  train: SplitResult;
  test: SplitResult;
  manifestPath: string;
}

export function expandTemplate(template: string, className: string): string {
  const pieces = template.split("{}");
  if (pieces.length !== 2) {
    throw new Error(`template ${JSON.stringify(template)} must contain exactly one {}`);
  }
  return pieces[0] + className + pieces[1];
}

function listDirs(path: string): string[] {
  return readdirSync(path)
    .filter((name) => statSync(join(path, name)).isDirectory())
    .sort();
}

function listFrameFiles(videoDir: string): string[] {
  return readdirSync(videoDir)
    .filter((name) => name.endsWith(".ppm"))
    .sort()
    .map((name) => join(videoDir, name));
}

export function discoverClassNames(root: string): string[] {
  return listDirs(join(root, "train"));
}

export function exportVideoFeatures(
  job: ExportJob,
  split: "train" | "test",
  encoder: Encoder,
  classNames: string[],
): { store: Store; skipped: string[] } {
  const rows: Float64Array[] = [];
  const labels: number[] = [];
  const skipped: string[] = [];
  const splitDir = join(job.root, split);
  for (let classIndex = 0; classIndex < classNames.length; classIndex++) {
    const classDir = join(splitDir, classNames[classIndex]);
    let videos: string[];
    try {
      videos = listDirs(classDir);
    } catch {
      continue; // class absent from this split
    }
    for (const video of videos) {
      const videoDir = join(classDir, video);
      try {
        const frameFiles = listFrameFiles(videoDir);
        if (frameFiles.length === 0) throw new Error("no frames");
        const indices = frameIndices(frameFiles.length, job.frames);
        const embedded = indices.map((i) => encoder.encodeImage(readPpm(frameFiles[i])));
        const row = new Float64Array(job.frames * encoder.dim);
        embedded.forEach((e, t) => row.set(e, t * encoder.dim));
        rows.push(row);
        labels.push(classIndex);
      } catch (err) {
        skipped.push(`${split}/${classNames[classIndex]}/${video}: ${(err as Error).message}`);
        console.error(`skipping undecodable video ${videoDir}: ${(err as Error).message}`);
      }
    }
  }
  const payload = new Float32Array(rows.length * job.frames * encoder.dim);
  rows.forEach((row, i) => payload.set(Float32Array.from(row), i * row.length));
  const store: Store = {
    n: rows.length,
    frames: job.frames,
    dim: encoder.dim,
    labels: Uint32Array.from(labels),
    payload,
  };
  return { store, skipped };
}

export function exportTextEmbeddings(
  job: ExportJob,
  encoder: Encoder,
  classNames: string[],
): Store {
  for (const name of classNames) {
    if (!name) throw new Error("empty class name in manifest");
  }
  const payload = new Float32Array(classNames.length * encoder.dim);
  classNames.forEach((name, i) => {
    const prompt = expandTemplate(job.template, name);
    payload.set(Float32Array.from(encoder.encodeText(prompt)), i * encoder.dim);
  });
  return {
    n: classNames.length,
    frames: 1,
    dim: encoder.dim,
    labels: Uint32Array.from(classNames.keys()),
    payload,
  };
}

export function runExport(job: ExportJob): ExportReport {
  const encoder = resolveEncoder(job.encoderId);
  const classNames = job.classNames ?? discoverClassNames(job.root);
  if (classNames.length === 0) throw new Error(`no classes found under ${job.root}/train`);
  mkdirSync(job.outDir, { recursive: true });

  const train = exportVideoFeatures(job, "train", encoder, classNames);
  const test = exportVideoFeatures(job, "test", encoder, classNames);
  writeStore(train.store, join(job.outDir, "train.t4v"));
  writeStore(test.store, join(job.outDir, "test.t4v"));
  writeStore(exportTextEmbeddings(job, encoder, classNames), join(job.outDir, "text.t4v"));

  const manifest = {
    dataset: job.datasetName,
    class_names: classNames,
    train_features: "train.t4v",
    test_features: "test.t4v",
    text_embeddings: "text.t4v",
    zero_shot_classes: null,
    zero_shot_exclude: [],
    notes: `exported by t4v-exporter; encoder=${encoder.id}; template=${JSON.stringify(job.template)}`,
  };
  const manifestPath = join(job.outDir, "manifest.json");
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");

  const report: ExportReport = {
    dataset: job.datasetName,
    encoder: encoder.id,
    dim: encoder.dim,
    frames: job.frames,
    classNames,
    train: { n: train.store.n, skipped: train.skipped },
    test: { n: test.store.n, skipped: test.skipped },
    manifestPath,
  };
  writeFileSync(join(job.outDir, "export_report.json"), JSON.stringify(report, null, 2) + "\n");
  return report;
}
