/**
 * Binary containers consumed by the dualcache engine.
 *
 * EMB1: 32-byte header (magic "EMB1", u32 version, u32 rows, u32 dim,
 * u8 normalized flag, 15 reserved zero bytes) followed by rows*dim
 * float32 values, row-major. LBL1: magic "LBL1", u32 version, u32
 * count, then count u32 class indices. Everything is little-endian
 * regardless of host so the files interchange bit-exactly.
 */

export const FORMAT_VERSION = 1;
const EMB1_HEADER = 32;
const LBL1_HEADER = 12;

export interface EmbeddingFile {
  rows: number;
  dim: number;
  normalized: boolean;
  data: Float32Array; // length rows * dim
}

export function encodeEmb1(m: EmbeddingFile): Buffer {
  if (m.data.length !== m.rows * m.dim) {
    throw new Error(`payload length ${m.data.length} != ${m.rows}x${m.dim}`);
  }
  const buf = Buffer.alloc(EMB1_HEADER + m.data.length * 4);
  buf.write("EMB1", 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(m.rows, 8);
  buf.writeUInt32LE(m.dim, 12);
  buf.writeUInt8(m.normalized ? 1 : 0, 16);
  for (let i = 0; i < m.data.length; i++) {
    buf.writeFloatLE(m.data[i], EMB1_HEADER + 4 * i);
  }
  return buf;
}

export function decodeEmb1(buf: Buffer): EmbeddingFile {
  if (buf.length < EMB1_HEADER) throw new Error("truncated EMB1 header");
  if (buf.toString("ascii", 0, 4) !== "EMB1") throw new Error("bad EMB1 magic");
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`);
  const rows = buf.readUInt32LE(8);
  const dim = buf.readUInt32LE(12);
  const normalized = buf.readUInt8(16) === 1;
  const expected = EMB1_HEADER + rows * dim * 4;
  if (buf.length !== expected) {
    throw new Error(`truncated EMB1 payload: ${buf.length} of ${expected} bytes`);
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(EMB1_HEADER + 4 * i);
  }
  return { rows, dim, normalized, data };
}

export function encodeLbl1(labels: number[]): Buffer {
  const buf = Buffer.alloc(LBL1_HEADER + labels.length * 4);
  buf.write("LBL1", 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(labels.length, 8);
  labels.forEach((label, i) => buf.writeUInt32LE(label, LBL1_HEADER + 4 * i));
  return buf;
}

export function decodeLbl1(buf: Buffer): number[] {
  if (buf.length < LBL1_HEADER) throw new Error("truncated LBL1 header");
  if (buf.toString("ascii", 0, 4) !== "LBL1") throw new Error("bad LBL1 magic");
  const count = buf.readUInt32LE(8);
  if (buf.length !== LBL1_HEADER + count * 4) throw new Error("truncated LBL1 payload");
  const labels: number[] = [];
  for (let i = 0; i < count; i++) labels.push(buf.readUInt32LE(LBL1_HEADER + 4 * i));
  return labels;
}

export function encodeVocabulary(names: string[]): Buffer {
  return Buffer.from(names.map((n) => `${n}\n`).join(""), "utf-8");
}
