#!/usr/bin/env node
/**
 * t4v-export: run an offline encoder over frame-dump videos and write
 * T4V1 feature stores + manifest.
 *
 *   t4v-export export --root data/ --out features/ --frames 8 \
 *       --encoder proj-64 [--dataset name] [--classes a,b,c] [--template "..."]
 *   t4v-export toyset --out data/ [--seed 7] [--classes a,b,c] \
 *       [--train-per-class 2] [--test-per-class 1]
 */

import { realpathSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { parseArgs } from "node:util";

import { DEFAULT_TEMPLATE, runExport } from "./export.js";
import { makeToySet } from "./toyset.js";

function usage(message?: string): never {
  if (message) console.error(`t4v-export: ${message}`);
  console.error(
    "usage: t4v-export export --root DIR --out DIR [--frames N] [--encoder ID]\n" +
      "                         [--dataset NAME] [--classes a,b,c] [--template TPL]\n" +
      "       t4v-export toyset --out DIR [--seed N] [--classes a,b,c]\n" +
      "                         [--train-per-class N] [--test-per-class N]",
  );
  process.exit(1);
}

export function main(argv: string[]): number {
  const command = argv[0];
  if (command === "export") {
    const { values } = parseArgs({
      args: argv.slice(1),
      options: {
        root: { type: "string" },
        out: { type: "string" },
        frames: { type: "string", default: "8" },
        encoder: { type: "string", default: "proj-64" },
        dataset: { type: "string", default: "exported" },
        classes: { type: "string" },
        template: { type: "string", default: DEFAULT_TEMPLATE },
      },
    });
    if (!values.root || !values.out) usage("export needs --root and --out");
    const report = runExport({
      root: values.root,
      outDir: values.out,
      frames: Number(values.frames),
      encoderId: values.encoder!,
      datasetName: values.dataset!,
      classNames: values.classes ? values.classes.split(",") : undefined,
      template: values.template!,
    });
    console.log(
      `exported ${report.train.n} train / ${report.test.n} test videos, ` +
        `${report.classNames.length} classes, d=${report.dim}; manifest at ${report.manifestPath}`,
    );
    const skipped = report.train.skipped.length + report.test.skipped.length;
    if (skipped > 0) console.error(`${skipped} video(s) skipped as undecodable`);
    return 0;
  }
  if (command === "toyset") {
    const { values } = parseArgs({
      args: argv.slice(1),
      options: {
        out: { type: "string" },
        seed: { type: "string", default: "7" },
        classes: { type: "string", default: "waving,jumping,spinning" },
        "train-per-class": { type: "string", default: "2" },
        "test-per-class": { type: "string", default: "1" },
      },
    });
    if (!values.out) usage("toyset needs --out");
    const classes = values.classes!.split(",");
    const count = makeToySet(values.out, {
      classes,
      trainPerClass: classes.map(() => Number(values["train-per-class"])),
      testPerClass: classes.map(() => Number(values["test-per-class"])),
      seed: Number(values.seed),
    });
    console.log(`wrote ${count} toy videos under ${values.out}`);
    return 0;
  }
  usage(command ? `unknown command ${JSON.stringify(command)}` : undefined);
}

const invokedDirectly = (() => {
  if (!process.argv[1]) return false;
  try {
    return realpathSync(process.argv[1]) === fileURLToPath(import.meta.url);
  } catch {
    return false;
  }
})();
if (invokedDirectly) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`t4v-export: ${(err as Error).message}`);
    process.exit(2);
  }
}
