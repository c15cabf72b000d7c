#!/usr/bin/env node
/**
 * emb-exporter export-images --root DIR --dataset NAME --out DIR [--backbone vit-b16]
 * emb-exporter export-text --classes FILE --dataset NAME --out DIR \
 *     [--backbone vit-b16] --template "t0=a class of {class}" [--template ...]
 */

import { promises as fs } from "node:fs";
import { parseArgs } from "node:util";

import { exportImages, exportText, TemplateSpec } from "./exporter.js";

function usage(): never {
  console.error(
    "usage: emb-exporter export-images --root DIR --dataset NAME --out DIR [--backbone ID]\n" +
    "       emb-exporter export-text --classes FILE --dataset NAME --out DIR [--backbone ID]" +
    " --template \"ID=TEXT with {class}\" [--template ...]",
  );
  process.exit(2);
}

function parseTemplates(raw: string[]): TemplateSpec[] {
  return raw.map((item) => {
    const eq = item.indexOf("=");
    if (eq <= 0) throw new Error(`template must look like id=text, got: ${item}`);
    return { id: item.slice(0, eq).trim(), template: item.slice(eq + 1) };
  });
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command !== "export-images" && command !== "export-text") usage();

  const { values } = parseArgs({
    args: rest,
    options: {
      root: { type: "string" },
      classes: { type: "string" },
      dataset: { type: "string" },
      out: { type: "string" },
      backbone: { type: "string", default: "vit-b16" },
      template: { type: "string", multiple: true },
    },
  });
  if (!values.dataset || !values.out) usage();

  if (command === "export-images") {
    if (!values.root) usage();
    const result = await exportImages({
      root: values.root,
      datasetName: values.dataset,
      backbone: values.backbone!,
      outDir: values.out,
    });
    console.log(`wrote ${result.embPath} (${result.rows} rows, ${result.skipped} skipped)`);
    console.log(`wrote ${result.lblPath}`);
    console.log(`wrote ${result.vocabPath}`);
    console.log(`wrote ${result.manifestPath}`);
  } else {
    if (!values.classes || !values.template?.length) usage();
    const names = (await fs.readFile(values.classes, "utf-8"))
      .split("\n")
      .map((line) => line.trim())
      .filter(Boolean);
    const result = await exportText({
      classes: names,
      templates: parseTemplates(values.template),
      datasetName: values.dataset,
      backbone: values.backbone!,
      outDir: values.out,
    });
    for (const file of result.files) console.log(`wrote ${file}`);
    console.log(`wrote ${result.manifestPath}`);
  }
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err.message}`);
    process.exit(1);
  },
);
