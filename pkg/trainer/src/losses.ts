/** Loss functions for the training harness.
 *
 * Raster-level: binary cross-entropy and the combined objective (BCE plus the
 * service-computed topology loss), both returning exact per-pixel gradients.
 * Graph-level: the same BCE as a tfjs op, and a custom node that injects the
 * service-supplied topology gradient verbatim into backprop. */

import * as tf from "@tensorflow/tfjs";

import { ServiceClient } from "./client.js";
import { Raster } from "./rasters.js";

export const BCE_EPSILON = 1e-7;

export class ShapeMismatch extends Error {
  readonly code = "SHAPE_MISMATCH";
}

export interface LossAndGrad {
  value: number;
  /** d(value)/d(pred), row-major, same shape as the prediction */
  grad: Float32Array;
}

function checkShapes(pred: Raster, gt: Raster): void {
  if (pred.height !== gt.height || pred.width !== gt.width) {
    throw new ShapeMismatch(
      `prediction is ${pred.height}x${pred.width}, ground truth ${gt.height}x${gt.width}`,
    );
  }
}

/** Mean binary cross-entropy with predictions clamped to [eps, 1-eps]. */
export function bceLoss(pred: Raster, gt: Raster): LossAndGrad {
  checkShapes(pred, gt);
  const n = pred.values.length;
  const grad = new Float32Array(n);
  let total = 0;
  for (let i = 0; i < n; i++) {
    const p = Math.min(1 - BCE_EPSILON, Math.max(BCE_EPSILON, pred.values[i]));
    const y = gt.values[i];
    total += -(y * Math.log(p) + (1 - y) * Math.log(1 - p));
    grad[i] = (-y / p + (1 - y) / (1 - p)) / n;
  }
  return { value: total / n, grad };
}

/** BCE plus the topology loss at `lambdaTopo`, gradients summed pixel-wise.
 * The topology part (value and exact gradient) comes from the service. */
export async function combinedLoss(
  client: ServiceClient,
  pred: Raster,
  gt: Raster,
  lambdaTopo: number,
): Promise<LossAndGrad> {
  checkShapes(pred, gt);
  const bce = bceLoss(pred, gt);
  if (lambdaTopo === 0) return bce;
  const topo = await client.loss(pred, gt, lambdaTopo, true);
  const grad = bce.grad.slice();
  const topoGrad = topo.grad;
  if (topoGrad === undefined) throw new Error("service returned no gradient");
  for (let i = 0; i < grad.length; i++) grad[i] += topoGrad.values[i];
  return { value: bce.value + topo.topoLoss, grad };
}

/** Graph-level BCE over a batch, mean over every element; matches bceLoss on
 * a single patch. */
export function bceLossTf(yTrue: tf.Tensor, yPred: tf.Tensor): tf.Scalar {
  return tf.tidy(() => {
    const p = tf.clipByValue(yPred, BCE_EPSILON, 1 - BCE_EPSILON);
    const term = tf.add(
      tf.mul(yTrue, tf.log(p)),
      tf.mul(tf.sub(1, yTrue), tf.log(tf.sub(1, p))),
    );
    return tf.neg(tf.mean(term)) as tf.Scalar;
  });
}

/** Custom loss node: forward returns the precomputed scalar, backward returns
 * dy * suppliedGrad with no re-derivation.  suppliedGrad must already carry
 * any batch averaging. */
export function injectedTopoTerm(
  value: number,
  suppliedGrad: tf.Tensor,
): (pred: tf.Tensor) => tf.Scalar {
  const node = tf.customGrad((pred, save) => {
    (save as tf.GradSaveFunc)([]);
    return {
      value: tf.scalar(value),
      gradFunc: (dy: tf.Tensor) => [tf.mul(dy, suppliedGrad)],
    };
  });
  return (pred: tf.Tensor) => node(pred) as tf.Scalar;
}
