/**
 * End-to-end integration with the primary toolkit: export a 10-video,
 * 3-class toy set, then drive `t4v inspect`, `train`, and `eval` on the
 * exported files through the primary CLI.
 */

import { execFileSync } from "node:child_process";
import { existsSync, mkdirSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { beforeAll, describe, expect, it } from "vitest";

import { runExport } from "../src/export.js";
import { readStore } from "../src/t4v1.js";
import { makeToySet } from "../src/toyset.js";

const PYTHON = process.env.T4V_PYTHON ?? "python3";

function t4v(args: string[]): { status: number; stdout: string } {
  try {
    const stdout = execFileSync(PYTHON, ["-m", "t4v.cli", ...args], {
      encoding: "utf-8",
      stdio: ["ignore", "pipe", "pipe"],
    });
    return { status: 0, stdout };
  } catch (err) {
    const e = err as { status?: number; stdout?: string; stderr?: string };
    return { status: e.status ?? 1, stdout: (e.stdout ?? "") + (e.stderr ?? "") };
  }
}

describe("exporter + primary toolkit", () => {
  const work = mkdtempSync(join(tmpdir(), "t4v-integration-"));
  const dataRoot = join(work, "data");
  const outDir = join(work, "features");
  const classes = ["waving", "jumping", "spinning"];
  const sortedClasses = [...classes].sort(); // discovery order = sorted dirs

  beforeAll(() => {
    // 10 videos: 7 train (3+2+2), 3 test (1 per class)
    const count = makeToySet(dataRoot, {
      classes,
      trainPerClass: [3, 2, 2],
      testPerClass: [1, 1, 1],
      seed: 7,
    });
    expect(count).toBe(10);
    runExport({
      root: dataRoot,
      outDir,
      frames: 4,
      encoderId: "proj-64",
      datasetName: "toy",
      template: "a video of a person {}.",
    });
  });

  it("exports stores with the expected shapes", () => {
    const train = readStore(join(outDir, "train.t4v"));
    expect(train.n).toBe(7);
    expect(train.frames).toBe(4);
    expect(train.dim).toBe(64);
    const text = readStore(join(outDir, "text.t4v"));
    expect(text.n).toBe(3);
    expect(text.frames).toBe(1);
    expect(Array.from(text.labels)).toEqual([0, 1, 2]);
  });

  it("text rows are unit-norm and ordered like the manifest", () => {
    const manifest = JSON.parse(readFileSync(join(outDir, "manifest.json"), "utf-8"));
    expect(manifest.class_names).toEqual(sortedClasses);
    const text = readStore(join(outDir, "text.t4v"));
    for (let i = 0; i < text.n; i++) {
      const row = text.payload.subarray(i * text.dim, (i + 1) * text.dim);
      const norm = Math.hypot(...row);
      expect(Math.abs(norm - 1)).toBeLessThan(1e-4);
    }
  });

  it("repeated export produces identical file bytes", () => {
    const again = join(work, "features2");
    runExport({
      root: dataRoot,
      outDir: again,
      frames: 4,
      encoderId: "proj-64",
      datasetName: "toy",
      template: "a video of a person {}.",
    });
    for (const name of ["train.t4v", "test.t4v", "text.t4v"]) {
      expect(readFileSync(join(again, name)).equals(readFileSync(join(outDir, name)))).toBe(true);
    }
  });

  it("skips undecodable videos with a report entry", () => {
    const brokenRoot = join(work, "broken");
    makeToySet(brokenRoot, {
      classes: ["a", "b"],
      trainPerClass: [2, 2],
      testPerClass: [1, 1],
      seed: 3,
    });
    const badDir = join(brokenRoot, "train", "a", "video_bad");
    mkdirSync(badDir, { recursive: true });
    writeFileSync(join(badDir, "frame_0000.ppm"), "not a ppm at all");
    const report = runExport({
      root: brokenRoot,
      outDir: join(work, "broken-out"),
      frames: 2,
      encoderId: "proj-16",
      datasetName: "broken",
      template: "{}",
    });
    expect(report.train.n).toBe(4);
    expect(report.train.skipped).toHaveLength(1);
    expect(report.train.skipped[0]).toContain("video_bad");
  });

  it("primary `inspect` accepts every exported file (exit 0)", () => {
    for (const name of ["train.t4v", "test.t4v", "text.t4v"]) {
      const { status, stdout } = t4v(["inspect", join(outDir, name)]);
      expect(status, stdout).toBe(0);
    }
  });

  it("primary `train` + `eval` complete end-to-end on the export", () => {
    const runDir = join(work, "run");
    const train = t4v([
      "train",
      "--manifest", join(outDir, "manifest.json"),
      "--out", runDir,
      "--classifier", "textual",
      "--head", "tap",
      "--objective", "frozen-ce",
      "--epochs", "2",
      "--warmup-epochs", "1",
      "--batch-size", "4",
      "--seed", "1",
    ]);
    expect(train.status, train.stdout).toBe(0);
    expect(existsSync(join(runDir, "head.t4p"))).toBe(true);
    const report = JSON.parse(readFileSync(join(runDir, "report.json"), "utf-8"));
    expect(report.frozen_unchanged).toBe(true);

    const evalDir = join(work, "eval");
    const evaluated = t4v([
      "eval",
      "--manifest", join(outDir, "manifest.json"),
      "--run", runDir,
      "--out", evalDir,
    ]);
    expect(evaluated.status, evaluated.stdout).toBe(0);
    const evalReport = JSON.parse(readFileSync(join(evalDir, "report.json"), "utf-8"));
    expect(evalReport.top1).toBeGreaterThanOrEqual(0.0);
    expect(evalReport.top1).toBeLessThanOrEqual(1.0);
  });
});
