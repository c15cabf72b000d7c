/**
 * Export jobs: walk an image folder tree or a prompt-template list,
 * embed everything with the chosen backbone, and emit EMB1/LBL1/
 * vocabulary files plus a manifest that records exactly what went in.
 *
 * Image row order follows the manifest's file list (classes in
 * vocabulary order, filenames sorted within a class). Unreadable
 * images are skipped with a manifest note; a job with zero surviving
 * rows fails.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import { Backbone, getBackbone } from "./backbone.js";
import { encodeEmb1, encodeLbl1, encodeVocabulary } from "./emb1.js";
import { IMAGE_EXTENSIONS, loadImage } from "./images.js";

export interface ExportImagesJob {
  root: string; // root/<class dir>/<image files>
  datasetName: string;
  backbone: string;
  outDir: string;
  classes?: string[]; // default: sorted subdirectory names of root
}

export interface ExportImagesResult {
  embPath: string;
  lblPath: string;
  vocabPath: string;
  manifestPath: string;
  rows: number;
  skipped: number;
}

export interface TemplateSpec {
  id: string;
  template: string; // must contain "{class}"
}

export interface ExportTextJob {
  classes: string[];
  templates: TemplateSpec[];
  datasetName: string;
  backbone: string;
  outDir: string;
}

export interface ExportTextResult {
  files: string[];
  manifestPath: string;
}

async function listClassDirs(root: string): Promise<string[]> {
  const entries = await fs.readdir(root, { withFileTypes: true });
  return entries
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
}

async function listImages(dir: string): Promise<string[]> {
  const entries = await fs.readdir(dir, { withFileTypes: true });
  return entries
    .filter((e) => e.isFile() && IMAGE_EXTENSIONS.has(path.extname(e.name).toLowerCase()))
    .map((e) => e.name)
    .sort();
}

function manifestHeader(job: { datasetName: string; backbone: string }, bb: Backbone): string[] {
  return [
    `dataset=${job.datasetName}`,
    `backbone=${bb.id}`,
    `dim=${bb.dim}`,
    `normalized=1`,
    `preprocess=${bb.preprocess}`,
  ];
}

export async function exportImages(job: ExportImagesJob): Promise<ExportImagesResult> {
  const bb = getBackbone(job.backbone);
  const classes = job.classes ?? (await listClassDirs(job.root));
  if (classes.length === 0) throw new Error(`no class directories under ${job.root}`);
  await fs.mkdir(job.outDir, { recursive: true });

  const vectors: Float32Array[] = [];
  const labels: number[] = [];
  const fileLines: string[] = [];
  const skipLines: string[] = [];

  for (let cls = 0; cls < classes.length; cls++) {
    const dir = path.join(job.root, classes[cls]);
    for (const name of await listImages(dir)) {
      const rel = `${classes[cls]}/${name}`;
      try {
        const image = await loadImage(path.join(dir, name), bb.inputSize);
        vectors.push(bb.embedImage(image));
        labels.push(cls);
        fileLines.push(`file ${vectors.length - 1} ${cls} ${rel}`);
      } catch (err) {
        skipLines.push(`skip ${rel} ${(err as Error).message.split("\n")[0]}`);
      }
    }
  }
  if (vectors.length === 0) {
    throw new Error(`export produced zero rows (skipped ${skipLines.length})`);
  }

  const data = new Float32Array(vectors.length * bb.dim);
  vectors.forEach((v, i) => data.set(v, i * bb.dim));

  const embPath = path.join(job.outDir, `${job.datasetName}.emb`);
  const lblPath = path.join(job.outDir, `${job.datasetName}.lbl`);
  const vocabPath = path.join(job.outDir, `${job.datasetName}.classes.txt`);
  const manifestPath = path.join(job.outDir, `${job.datasetName}.manifest.txt`);

  await fs.writeFile(embPath, encodeEmb1({
    rows: vectors.length, dim: bb.dim, normalized: true, data,
  }));
  await fs.writeFile(lblPath, encodeLbl1(labels));
  await fs.writeFile(vocabPath, encodeVocabulary(classes));
  const manifest = [
    ...manifestHeader(job, bb),
    `images=${vectors.length}`,
    `skipped=${skipLines.length}`,
    ...classes.map((name, i) => `class ${i} ${name}`),
    ...fileLines,
    ...skipLines,
  ];
  await fs.writeFile(manifestPath, manifest.join("\n") + "\n");

  return {
    embPath, lblPath, vocabPath, manifestPath,
    rows: vectors.length,
    skipped: skipLines.length,
  };
}

export async function exportText(job: ExportTextJob): Promise<ExportTextResult> {
  const bb = getBackbone(job.backbone);
  if (job.classes.length === 0) throw new Error("empty class list");
  for (const t of job.templates) {
    if (!t.template.includes("{class}")) {
      throw new Error(`template ${t.id} has no {class} placeholder: ${t.template}`);
    }
  }
  if (job.templates.length === 0) throw new Error("no templates given");
  await fs.mkdir(job.outDir, { recursive: true });

  const files: string[] = [];
  for (const t of job.templates) {
    const data = new Float32Array(job.classes.length * bb.dim);
    job.classes.forEach((name, cls) => {
      const prompt = t.template.replaceAll("{class}", name);
      data.set(bb.embedText(prompt), cls * bb.dim);
    });
    const filePath = path.join(job.outDir, `${job.datasetName}.${t.id}.text.emb`);
    await fs.writeFile(filePath, encodeEmb1({
      rows: job.classes.length, dim: bb.dim, normalized: true, data,
    }));
    files.push(filePath);
  }

  const manifestPath = path.join(job.outDir, `${job.datasetName}.text.manifest.txt`);
  const manifest = [
    ...manifestHeader(job, bb),
    `classes=${job.classes.length}`,
    ...job.templates.map((t) => `template ${t.id}=${t.template}`),
  ];
  await fs.writeFile(manifestPath, manifest.join("\n") + "\n");
  return { files, manifestPath };
}
