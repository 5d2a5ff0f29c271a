/** U-Net for 64x64 single-channel likelihood inputs: encoder stages of two
 * 3x3 convolutions + ReLU with 2x2 max-pooling between stages, features
 * doubling per stage; mirrored decoder with 2x2 nearest-neighbor upsampling,
 * skip concatenation, and two 3x3 convolutions; final 1x1 convolution +
 * sigmoid.  All weight initializers are seeded so a fixed config yields
 * identical initial weights. */

import * as tf from "@tensorflow/tfjs";
import { z } from "zod";

export const INPUT_SIZE = 64;

export class InvalidConfig extends Error {
  readonly code = "INVALID_CONFIG";
}

export const trainConfigSchema = z.object({
  base_features: z.number().int().positive().default(8),
  depth: z.number().int().positive().default(3),
  epochs_pretrain: z.number().int().nonnegative().default(10),
  epochs_finetune: z.number().int().nonnegative().default(10),
  learning_rate: z.number().positive().default(1e-3),
  lambda_topo: z.number().nonnegative().default(1.0),
  batch_size: z.number().int().positive().default(8),
  seed: z.number().int().nonnegative().default(0),
  arm: z.enum(["baseline", "topocp"]).default("baseline"),
});

export type TrainConfig = z.infer<typeof trainConfigSchema>;

export function parseTrainConfig(raw: unknown): TrainConfig {
  const parsed = trainConfigSchema.safeParse(raw);
  if (!parsed.success) {
    throw new InvalidConfig(parsed.error.issues.map((i) => `${i.path.join(".")}: ${i.message}`).join("; "));
  }
  return parsed.data;
}

export function buildUnet(config: TrainConfig): tf.LayersModel {
  const shrink = 2 ** (config.depth - 1);
  if (INPUT_SIZE % shrink !== 0 || INPUT_SIZE / shrink < 2) {
    throw new InvalidConfig(
      `depth ${config.depth} shrinks a ${INPUT_SIZE}x${INPUT_SIZE} input to ` +
        `${INPUT_SIZE / shrink} pixels at the bottleneck`,
    );
  }

  let layerIndex = 0;
  const seeded = () => ({
    kernelInitializer: tf.initializers.glorotUniform({
      seed: (config.seed % 2_147_483_647) + 7919 * layerIndex++,
    }),
  });

  const convBlock = (x: tf.SymbolicTensor, features: number): tf.SymbolicTensor => {
    for (let i = 0; i < 2; i++) {
      x = tf.layers
        .conv2d({ filters: features, kernelSize: 3, padding: "same", activation: "relu", ...seeded() })
        .apply(x) as tf.SymbolicTensor;
    }
    return x;
  };

  const input = tf.input({ shape: [INPUT_SIZE, INPUT_SIZE, 1] });
  const skips: tf.SymbolicTensor[] = [];
  let x = input;
  for (let stage = 0; stage < config.depth; stage++) {
    if (stage > 0) {
      x = tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
    }
    x = convBlock(x, config.base_features * 2 ** stage);
    if (stage < config.depth - 1) skips.push(x);
  }
  for (let stage = config.depth - 2; stage >= 0; stage--) {
    x = tf.layers.upSampling2d({ size: [2, 2], interpolation: "nearest" }).apply(x) as tf.SymbolicTensor;
    x = tf.layers
      .conv2d({
        filters: config.base_features * 2 ** stage,
        kernelSize: 2,
        padding: "same",
        activation: "relu",
        ...seeded(),
      })
      .apply(x) as tf.SymbolicTensor;
    x = tf.layers.concatenate().apply([skips[stage], x]) as tf.SymbolicTensor;
    x = convBlock(x, config.base_features * 2 ** stage);
  }
  const output = tf.layers
    .conv2d({ filters: 1, kernelSize: 1, activation: "sigmoid", ...seeded() })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: output });
}

/** Largest convolution width in the model (the bottleneck feature count). */
export function deepestFeatures(model: tf.LayersModel): number {
  let widest = 0;
  for (const layer of model.layers) {
    const cfg = layer.getConfig() as { filters?: number };
    if (typeof cfg.filters === "number") widest = Math.max(widest, cfg.filters);
  }
  return widest;
}
