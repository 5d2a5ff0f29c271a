/** Seeded raster generators shared by the test suites. */

import seedrandom from "seedrandom";

import { PatchSample } from "../src/data.js";
import { Raster, makeRaster } from "../src/rasters.js";

export const SIZE = 64;

/** Smooth random field from a low-frequency cosine mixture, rescaled into
 * (0, 1) so it carries a nontrivial persistence diagram. */
export function smoothField(rng: seedrandom.PRNG, size = SIZE): Raster {
  const waves = Array.from({ length: 6 }, () => ({
    amp: rng() * 2 - 1,
    fy: (rng() * 4 - 2) / size,
    fx: (rng() * 4 - 2) / size,
    phase: rng() * 2 * Math.PI,
  }));
  const values = new Float32Array(size * size);
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < size; i++) {
    for (let j = 0; j < size; j++) {
      let v = 0;
      for (const w of waves) v += w.amp * Math.cos(2 * Math.PI * (w.fy * i + w.fx * j) + w.phase);
      values[i * size + j] = v;
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  const span = hi - lo || 1;
  for (let i = 0; i < values.length; i++) {
    values[i] = Math.fround(0.02 + (0.96 * (values[i] - lo)) / span);
  }
  return makeRaster(size, size, values);
}

/** Binary mask from a thresholded smooth field, never fully empty. */
export function binaryField(rng: seedrandom.PRNG, size = SIZE): Raster {
  const field = smoothField(rng, size);
  const values = new Float32Array(field.values.length);
  for (let i = 0; i < values.length; i++) values[i] = field.values[i] >= 0.5 ? 1 : 0;
  // a mask with no foreground is rejected by the toolkit; force one pixel on
  if (!values.some((v) => v === 1)) values[2 * size + 2] = 1;
  return makeRaster(size, size, values);
}

/** Learnable image/mask pairs: the mask is the image thresholded at 0.5. */
export function samplePatches(seedTag: string, count: number): PatchSample[] {
  const rng = seedrandom(seedTag);
  return Array.from({ length: count }, () => {
    const image = smoothField(rng);
    const values = new Float32Array(image.values.length);
    for (let i = 0; i < values.length; i++) values[i] = image.values[i] >= 0.5 ? 1 : 0;
    if (!values.some((v) => v === 1)) values[2 * SIZE + 2] = 1;
    return { image, gt: makeRaster(SIZE, SIZE, values) };
  });
}
