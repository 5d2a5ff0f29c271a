/** Dataset plumbing: manifest cases in, shuffled tensor batches out.
 *
 * Patch cutting happens in the segmentation service so the trainer sees the
 * same crops as every other consumer of the toolkit. */

import * as tf from "@tensorflow/tfjs";

import { ServiceClient } from "./client.js";
import { INPUT_SIZE } from "./unet.js";
import { ManifestEntry, Raster, makeRaster, readRasterFile } from "./rasters.js";

import seedrandom from "seedrandom";

export interface PatchSample {
  /** intensity patch, the network input */
  image: Raster;
  /** binary ground-truth patch */
  gt: Raster;
}

/** Which rendering of a case feeds the network. */
export type InputSource = "image" | "degraded";

/** Cut aligned input/target patches for every manifest case. */
export async function loadPatches(
  client: ServiceClient,
  entries: ManifestEntry[],
  stride = 32,
  source: InputSource = "image",
): Promise<PatchSample[]> {
  const out: PatchSample[] = [];
  for (const entry of entries) {
    const image = readRasterFile(source === "degraded" ? entry.degraded_path : entry.image_path);
    const gt = readRasterFile(entry.gt_path);
    const cut = await client.patches(image, gt, stride);
    for (const p of cut) {
      out.push({ image: p.image, gt: p.gt });
    }
  }
  return out;
}

/** Seeded Fisher-Yates shuffle; the input is left untouched. */
export function shuffled<T>(items: T[], seed: string): T[] {
  const rng = seedrandom(seed);
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

/** Contiguous chunks of `size`; the final partial batch is kept. */
export function toBatches<T>(items: T[], size: number): T[][] {
  if (!Number.isInteger(size) || size < 1) {
    throw new Error(`batch size must be a positive integer, got ${size}`);
  }
  const out: T[][] = [];
  for (let i = 0; i < items.length; i += size) {
    out.push(items.slice(i, i + size));
  }
  return out;
}

/** Stack a batch of patches into [batch, 64, 64, 1] input/target tensors. */
export function batchTensors(batch: PatchSample[]): { x: tf.Tensor4D; y: tf.Tensor4D } {
  const n = INPUT_SIZE * INPUT_SIZE;
  const xs = new Float32Array(batch.length * n);
  const ys = new Float32Array(batch.length * n);
  batch.forEach((sample, i) => {
    if (sample.image.values.length !== n || sample.gt.values.length !== n) {
      throw new Error(
        `expected ${INPUT_SIZE}x${INPUT_SIZE} patches, got ` +
          `${sample.image.height}x${sample.image.width}`,
      );
    }
    xs.set(sample.image.values, i * n);
    ys.set(sample.gt.values, i * n);
  });
  const shape: [number, number, number, number] = [batch.length, INPUT_SIZE, INPUT_SIZE, 1];
  return { x: tf.tensor4d(xs, shape), y: tf.tensor4d(ys, shape) };
}

/** Split a prediction tensor [batch, 64, 64, 1] back into per-sample rasters. */
export function predictionRasters(pred: tf.Tensor4D): Raster[] {
  const [batch] = pred.shape;
  const n = INPUT_SIZE * INPUT_SIZE;
  const data = pred.dataSync() as Float32Array;
  const out: Raster[] = [];
  for (let i = 0; i < batch; i++) {
    out.push(makeRaster(INPUT_SIZE, INPUT_SIZE, data.slice(i * n, (i + 1) * n)));
  }
  return out;
}
