/**
 * Embedding backbones.
 *
 * A Backbone turns preprocessed pixels or a text string into a unit-norm
 * feature vector of a fixed dimension. The bundled implementations are
 * deterministic offline encoders: a fixed seeded random projection over
 * hand-rolled image/text statistics, mirroring the output shapes of the
 * usual vision-language towers (vit-b16 -> 512 channels, rn50 -> 1024).
 * They need no downloaded weights and produce byte-identical output for
 * identical input, which is what the file-format pipeline and its tests
 * require; a real encoder drops in by implementing the same interface.
 */

export interface RgbaImage {
  width: number;
  height: number;
  data: Uint8Array; // RGBA, width * height * 4
}

export interface Backbone {
  readonly id: string;
  readonly dim: number;
  readonly inputSize: number; // square edge length expected by embedImage
  readonly preprocess: string; // recorded in the manifest for audit
  embedImage(image: RgbaImage): Float32Array;
  embedText(text: string): Float32Array;
}

const IMAGE_FEATURES = 214; // 8x8 grid x RGB + 16-bin luma hist + 6 moments
const TEXT_FEATURES = 512; // byte unigrams + hashed bigrams

/** splitmix64, seeded from a string; drives the projection weights. */
function makePrng(seedText: string): () => number {
  let state = 0xcbf29ce484222325n;
  for (const ch of Buffer.from(seedText, "utf-8")) {
    state ^= BigInt(ch);
    state = (state * 0x100000001b3n) & 0xffffffffffffffffn;
  }
  return () => {
    state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    return Number(z >> 11n) / 2 ** 53; // uniform in [0, 1)
  };
}

/** Fixed projection matrix (inputDim x outputDim), entries in [-1, 1). */
function makeProjection(seedText: string, inputDim: number, outputDim: number): Float64Array {
  const rand = makePrng(seedText);
  const w = new Float64Array(inputDim * outputDim);
  for (let i = 0; i < w.length; i++) w[i] = 2 * rand() - 1;
  return w;
}

function project(features: Float64Array, w: Float64Array, outputDim: number): Float32Array {
  const inputDim = features.length;
  const out = new Float64Array(outputDim);
  for (let i = 0; i < inputDim; i++) {
    const x = features[i];
    if (x === 0) continue;
    const rowOffset = i * outputDim;
    for (let j = 0; j < outputDim; j++) out[j] += x * w[rowOffset + j];
  }
  let norm = 0;
  for (let j = 0; j < outputDim; j++) norm += out[j] * out[j];
  norm = Math.sqrt(norm);
  if (norm === 0) throw new Error("degenerate feature vector");
  const unit = new Float32Array(outputDim);
  for (let j = 0; j < outputDim; j++) unit[j] = out[j] / norm;
  // float32 rounding nudges the norm; renormalize once in float32 space
  let n32 = 0;
  for (let j = 0; j < outputDim; j++) n32 += unit[j] * unit[j];
  n32 = Math.sqrt(n32);
  for (let j = 0; j < outputDim; j++) unit[j] = unit[j] / n32;
  return unit;
}

function imageStatistics(image: RgbaImage): Float64Array {
  const { width, height, data } = image;
  const features = new Float64Array(IMAGE_FEATURES);
  const grid = 8;
  const cellW = width / grid;
  const cellH = height / grid;
  const sums = new Float64Array(grid * grid * 3);
  const counts = new Float64Array(grid * grid);
  const hist = new Float64Array(16);
  let meanR = 0, meanG = 0, meanB = 0;
  const pixels = width * height;
  for (let y = 0; y < height; y++) {
    const gy = Math.min(grid - 1, Math.floor(y / cellH));
    for (let x = 0; x < width; x++) {
      const gx = Math.min(grid - 1, Math.floor(x / cellW));
      const p = 4 * (y * width + x);
      const r = data[p] / 255, g = data[p + 1] / 255, b = data[p + 2] / 255;
      const cell = gy * grid + gx;
      sums[3 * cell] += r;
      sums[3 * cell + 1] += g;
      sums[3 * cell + 2] += b;
      counts[cell] += 1;
      const luma = 0.299 * r + 0.587 * g + 0.114 * b;
      hist[Math.min(15, Math.floor(luma * 16))] += 1;
      meanR += r; meanG += g; meanB += b;
    }
  }
  for (let cell = 0; cell < grid * grid; cell++) {
    const n = counts[cell] || 1;
    features[3 * cell] = sums[3 * cell] / n;
    features[3 * cell + 1] = sums[3 * cell + 1] / n;
    features[3 * cell + 2] = sums[3 * cell + 2] / n;
  }
  for (let bin = 0; bin < 16; bin++) features[192 + bin] = hist[bin] / pixels;
  meanR /= pixels; meanG /= pixels; meanB /= pixels;
  let varR = 0, varG = 0, varB = 0;
  for (let p = 0; p < data.length; p += 4) {
    varR += (data[p] / 255 - meanR) ** 2;
    varG += (data[p + 1] / 255 - meanG) ** 2;
    varB += (data[p + 2] / 255 - meanB) ** 2;
  }
  features[208] = meanR;
  features[209] = meanG;
  features[210] = meanB;
  features[211] = Math.sqrt(varR / pixels);
  features[212] = Math.sqrt(varG / pixels);
  features[213] = Math.sqrt(varB / pixels);
  return features;
}

function textStatistics(text: string): Float64Array {
  const bytes = Buffer.from(text.toLowerCase(), "utf-8");
  const features = new Float64Array(TEXT_FEATURES);
  const scale = 1 / Math.max(1, bytes.length);
  for (let i = 0; i < bytes.length; i++) {
    features[bytes[i]] += scale;
    if (i + 1 < bytes.length) {
      const bigram = (bytes[i] * 31 + bytes[i + 1]) % 256;
      features[256 + bigram] += scale;
    }
  }
  return features;
}

class DeterministicBackbone implements Backbone {
  readonly preprocess: string;
  private imageW: Float64Array | null = null;
  private textW: Float64Array | null = null;

  constructor(
    readonly id: string,
    readonly dim: number,
    readonly inputSize: number,
  ) {
    this.preprocess = `resize${inputSize}-bilinear;rgba;grid8+hist16+moments`;
  }

  embedImage(image: RgbaImage): Float32Array {
    if (image.width !== this.inputSize || image.height !== this.inputSize) {
      throw new Error(
        `expected ${this.inputSize}x${this.inputSize} input, got ${image.width}x${image.height}`,
      );
    }
    this.imageW ??= makeProjection(`${this.id}/image`, IMAGE_FEATURES, this.dim);
    return project(imageStatistics(image), this.imageW, this.dim);
  }

  embedText(text: string): Float32Array {
    this.textW ??= makeProjection(`${this.id}/text`, TEXT_FEATURES, this.dim);
    return project(textStatistics(text), this.textW, this.dim);
  }
}

const REGISTRY: Record<string, () => Backbone> = {
  "vit-b16": () => new DeterministicBackbone("vit-b16", 512, 224),
  "rn50": () => new DeterministicBackbone("rn50", 1024, 224),
};

export function getBackbone(id: string): Backbone {
  const make = REGISTRY[id];
  if (!make) {
    throw new Error(`unknown backbone ${id}; available: ${Object.keys(REGISTRY).join(", ")}`);
  }
  return make();
}
