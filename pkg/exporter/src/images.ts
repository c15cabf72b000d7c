/**
 * Image loading: decode with jimp, resize to the backbone's square
 * evaluation size. Pure-JS decoding keeps the pipeline free of native
 * binaries and byte-deterministic across runs.
 */

import { Jimp } from "jimp";

import type { RgbaImage } from "./backbone.js";

export const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".tiff", ".gif"]);

export async function loadImage(path: string, size: number): Promise<RgbaImage> {
  const image = await Jimp.read(path);
  image.resize({ w: size, h: size });
  return {
    width: size,
    height: size,
    data: new Uint8Array(image.bitmap.data),
  };
}
