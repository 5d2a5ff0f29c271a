/** Raster file codecs shared with the segmentation service: PGM8 for masks
 * and 8-bit likelihoods, F32R for float likelihoods and signed gradients. */

import { readFileSync, writeFileSync } from "node:fs";

const F32R_MAGIC = "F32R";
const VALUE_TOLERANCE = 1e-6;

export class RasterError extends Error {}

export interface Raster {
  height: number;
  width: number;
  /** row-major values */
  values: Float32Array;
}

export function makeRaster(height: number, width: number, values: Float32Array): Raster {
  if (height <= 0 || width <= 0 || values.length !== height * width) {
    throw new RasterError(`bad raster shape ${height}x${width} for ${values.length} values`);
  }
  return { height, width, values };
}

export function decodeF32r(buf: Uint8Array, opts: { signed?: boolean } = {}): Raster {
  if (buf.length < 12) throw new RasterError("truncated F32R header");
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const magic = String.fromCharCode(buf[0], buf[1], buf[2], buf[3]);
  if (magic !== F32R_MAGIC) throw new RasterError(`bad magic ${JSON.stringify(magic)}`);
  const height = view.getUint32(4, true);
  const width = view.getUint32(8, true);
  if (height === 0 || width === 0) throw new RasterError("zero raster dimension");
  const expected = 12 + 4 * height * width;
  if (buf.length !== expected) {
    throw new RasterError(`F32R payload is ${buf.length} bytes, expected ${expected}`);
  }
  const values = new Float32Array(height * width);
  for (let i = 0; i < values.length; i++) {
    let v = view.getFloat32(12 + 4 * i, true);
    if (!opts.signed) {
      if (v < -VALUE_TOLERANCE || v > 1 + VALUE_TOLERANCE) {
        throw new RasterError(`likelihood value ${v} outside [0, 1]`);
      }
      v = Math.min(1, Math.max(0, v));
    }
    values[i] = v;
  }
  return { height, width, values };
}

export function encodeF32r(raster: Raster, opts: { signed?: boolean } = {}): Uint8Array {
  const { height, width, values } = raster;
  const out = new Uint8Array(12 + 4 * values.length);
  const view = new DataView(out.buffer);
  for (let i = 0; i < 4; i++) out[i] = F32R_MAGIC.charCodeAt(i);
  view.setUint32(4, height, true);
  view.setUint32(8, width, true);
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (!opts.signed && (v < 0 || v > 1)) {
      throw new RasterError(`likelihood value ${v} outside [0, 1]`);
    }
    view.setFloat32(12 + 4 * i, v, true);
  }
  return out;
}

export function decodePgm8(buf: Uint8Array): Raster {
  // strict binary PGM: P5, dimensions, maxval 255, single whitespace, payload
  let pos = 0;
  const token = (): string => {
    while (pos < buf.length && isSpace(buf[pos])) pos++;
    const start = pos;
    while (pos < buf.length && !isSpace(buf[pos])) pos++;
    if (start === pos) throw new RasterError("truncated PGM header");
    return String.fromCharCode(...buf.subarray(start, pos));
  };
  if (token() !== "P5") throw new RasterError("not a binary PGM (P5) file");
  const width = parseDim(token());
  const height = parseDim(token());
  if (token() !== "255") throw new RasterError("PGM maxval must be 255");
  pos++; // exactly one whitespace byte before the payload
  const expected = height * width;
  if (buf.length - pos !== expected) {
    throw new RasterError(`PGM payload is ${buf.length - pos} bytes, expected ${expected}`);
  }
  const values = new Float32Array(expected);
  for (let i = 0; i < expected; i++) values[i] = buf[pos + i] / 255;
  return { height, width, values };
}

export function encodePgm8(raster: Raster): Uint8Array {
  const { height, width, values } = raster;
  const header = `P5\n${width} ${height}\n255\n`;
  const out = new Uint8Array(header.length + values.length);
  for (let i = 0; i < header.length; i++) out[i] = header.charCodeAt(i);
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (v < 0 || v > 1) throw new RasterError(`likelihood value ${v} outside [0, 1]`);
    out[header.length + i] = Math.floor(v * 255 + 0.5);
  }
  return out;
}

export function decodeRaster(buf: Uint8Array): Raster {
  if (buf.length >= 2 && buf[0] === 0x50 && buf[1] === 0x35) return decodePgm8(buf);
  return decodeF32r(buf);
}

export function readRasterFile(path: string): Raster {
  return decodeRaster(new Uint8Array(readFileSync(path)));
}

export function writeRasterFile(path: string, raster: Raster): void {
  const data = path.endsWith(".pgm") ? encodePgm8(raster) : encodeF32r(raster);
  writeFileSync(path, data);
}

export function toBase64(buf: Uint8Array): string {
  return Buffer.from(buf).toString("base64");
}

export function fromBase64(text: string): Uint8Array {
  return new Uint8Array(Buffer.from(text, "base64"));
}

/** Binarize at an inclusive threshold into a {0,1} raster. */
export function binarize(raster: Raster, threshold = 0.5): Raster {
  const values = new Float32Array(raster.values.length);
  for (let i = 0; i < values.length; i++) values[i] = raster.values[i] >= threshold ? 1 : 0;
  return { height: raster.height, width: raster.width, values };
}

export interface ManifestEntry {
  id: string;
  image_path: string;
  gt_path: string;
  degraded_path: string;
  spec: Record<string, unknown>;
}

export function readManifest(path: string): ManifestEntry[] {
  const lines = readFileSync(path, "utf-8").split("\n").filter((l) => l.trim() !== "");
  return lines.map((line) => JSON.parse(line) as ManifestEntry);
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

function parseDim(text: string): number {
  const n = Number(text);
  if (!Number.isInteger(n) || n <= 0) throw new RasterError(`bad PGM dimension ${text}`);
  return n;
}
