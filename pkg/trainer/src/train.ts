/** Two-phase training harness.
 *
 * Phase 1 pretrains with binary cross-entropy.  Phase 2 continues with BCE
 * for the baseline arm, or BCE plus the topology loss for the topocp arm.
 * The topology term is computed by the segmentation service at the current
 * weights (value and exact per-pixel gradient), then injected into backprop
 * verbatim through a custom gradient node.  Test metrics likewise come from
 * the service, never from a local reimplementation.
 */

import * as tf from "@tensorflow/tfjs";
import { parseArgs } from "node:util";
import { readFileSync, writeFileSync } from "node:fs";

import { initBackend } from "./backend.js";
import { MetricsReport, ServiceClient } from "./client.js";
import { PatchSample, batchTensors, loadPatches, predictionRasters, shuffled, toBatches } from "./data.js";
import { bceLossTf, injectedTopoTerm } from "./losses.js";
import { readManifest } from "./rasters.js";
import { startService } from "./service.js";
import { TrainConfig, buildUnet, parseTrainConfig } from "./unet.js";

export interface Aggregate {
  mean: number;
  /** population standard deviation */
  sd: number;
  n: number;
}

export interface MetricsSummary {
  dsc: Aggregate;
  /** null when no test case had both masks non-empty */
  asd_mm: Aggregate | null;
  hd95_mm: Aggregate | null;
  betti0_error: Aggregate;
}

export interface ArmReport {
  arm: "baseline" | "topocp";
  config: TrainConfig;
  loss_curves: { pretrain: number[]; finetune: number[] };
  metrics: MetricsSummary;
  test_cases: number;
}

export interface ResolvedConfig {
  config: TrainConfig;
  /** true when the input set lambda_topo on a baseline run */
  ignoredLambda: boolean;
}

/** Fine-tuning runs at this fraction of the configured learning rate, for
 * both arms: phase 2 only polishes an already-converged network, and the
 * smaller steps keep the topology term's sparse, large gradients from
 * trading away boundary accuracy.  The weight itself stays constant through
 * the phase — scheduling it proved unstable, because gradients whose scale
 * grows late in training overshoot once Adam's moment estimates have adapted
 * to the small late-phase cross-entropy gradients. */
export const FINETUNE_LR_FACTOR = 0.5;

/** Parse a raw config object, flagging lambda_topo on baseline as ignored. */
export function resolveConfig(raw: unknown): ResolvedConfig {
  const config = parseTrainConfig(raw);
  const ignoredLambda =
    config.arm === "baseline" &&
    typeof raw === "object" &&
    raw !== null &&
    Object.prototype.hasOwnProperty.call(raw, "lambda_topo");
  return { config, ignoredLambda };
}

export function aggregate(values: number[]): Aggregate {
  const n = values.length;
  if (n === 0) throw new Error("cannot aggregate zero values");
  const mean = values.reduce((a, v) => a + v, 0) / n;
  const varSum = values.reduce((a, v) => a + (v - mean) ** 2, 0);
  return { mean, sd: Math.sqrt(varSum / n), n };
}

function optionalAggregate(values: number[]): Aggregate | null {
  return values.length === 0 ? null : aggregate(values);
}

export function summarizeMetrics(reports: MetricsReport[]): MetricsSummary {
  return {
    dsc: aggregate(reports.map((r) => r.dsc)),
    asd_mm: optionalAggregate(reports.flatMap((r) => (r.asd_mm === undefined ? [] : [r.asd_mm]))),
    hd95_mm: optionalAggregate(
      reports.flatMap((r) => (r.hd95_mm === undefined ? [] : [r.hd95_mm])),
    ),
    betti0_error: aggregate(reports.map((r) => r.betti0_error)),
  };
}

/** Threshold-at-0.5 service metrics for every test patch. */
export async function evaluateModel(
  model: tf.LayersModel,
  test: PatchSample[],
  client: ServiceClient,
): Promise<{ summary: MetricsSummary; perCase: MetricsReport[] }> {
  const perCase: MetricsReport[] = [];
  for (const batch of toBatches(test, 16)) {
    const { x } = batchTensors(batch);
    const predT = model.predict(x) as tf.Tensor4D;
    const preds = predictionRasters(predT);
    tf.dispose([x, predT]);
    for (let i = 0; i < batch.length; i++) {
      perCase.push(await client.metrics(preds[i], batch[i].gt, 0.5));
    }
  }
  return { summary: summarizeMetrics(perCase), perCase };
}

export interface TrainArmOptions {
  config: TrainConfig;
  train: PatchSample[];
  test: PatchSample[];
  client: ServiceClient;
  /** emit the ignored-lambda warning before training */
  warnIgnoredLambda?: boolean;
  log?: (line: string) => void;
}

export interface TrainArmResult {
  report: ArmReport;
  model: tf.LayersModel;
}

export async function trainArm(opts: TrainArmOptions): Promise<TrainArmResult> {
  const { config, client } = opts;
  if (opts.warnIgnoredLambda) {
    console.warn("warning: lambda_topo is ignored for the baseline arm");
  }
  await initBackend();
  const model = buildUnet(config);
  const optimizer = tf.train.adam(config.learning_rate);
  const useTopo = config.arm === "topocp" && config.lambda_topo !== 0;

  const bceStep = (batch: PatchSample[]): number => {
    const { x, y } = batchTensors(batch);
    const lossT = optimizer.minimize(
      () => bceLossTf(y, model.apply(x, { training: true }) as tf.Tensor),
      true,
    ) as tf.Scalar;
    const loss = lossT.dataSync()[0];
    tf.dispose([x, y, lossT]);
    return loss;
  };

  const combinedStep = async (batch: PatchSample[]): Promise<number> => {
    const { x, y } = batchTensors(batch);
    // first forward: predictions at the current weights for the service
    const predT = model.predict(x) as tf.Tensor4D;
    const preds = predictionRasters(predT);
    predT.dispose();
    const results = await client.lossBatch(
      preds.map((pred, i) => ({ pred, gt: batch[i].gt })),
      config.lambda_topo,
      true,
    );
    const b = batch.length;
    const n = preds[0].values.length;
    const gradFlat = new Float32Array(b * n);
    let topoValue = 0;
    results.forEach((r, i) => {
      if (r.grad === undefined) throw new Error("service returned no gradient");
      topoValue += r.topoLoss / b;
      const g = r.grad.values;
      for (let k = 0; k < n; k++) gradFlat[i * n + k] = g[k] / b;
    });
    const topoGrad = tf.tensor4d(gradFlat, predShape(b));
    // second forward inside minimize; weights unchanged, so the injected
    // gradient is exact for the prediction being differentiated
    const lossT = optimizer.minimize(() => {
      const pred = model.apply(x, { training: true }) as tf.Tensor;
      const topoTerm = injectedTopoTerm(topoValue, topoGrad)(pred);
      return tf.add(bceLossTf(y, pred), topoTerm) as tf.Scalar;
    }, true) as tf.Scalar;
    const loss = lossT.dataSync()[0];
    tf.dispose([x, y, topoGrad, lossT]);
    return loss;
  };

  const runPhase = async (
    phase: "pretrain" | "finetune",
    epochs: number,
    step: (batch: PatchSample[]) => number | Promise<number>,
  ): Promise<number[]> => {
    const curve: number[] = [];
    for (let epoch = 0; epoch < epochs; epoch++) {
      const order = shuffled(opts.train, `${config.seed}:${phase}:${epoch}`);
      let sum = 0;
      let batches = 0;
      for (const batch of toBatches(order, config.batch_size)) {
        sum += await step(batch);
        batches += 1;
      }
      const mean = batches === 0 ? 0 : sum / batches;
      curve.push(mean);
      opts.log?.(`${config.arm} ${phase} epoch ${epoch + 1}/${epochs} loss ${mean.toFixed(6)}`);
    }
    return curve;
  };

  const pretrain = await runPhase("pretrain", config.epochs_pretrain, bceStep);
  // same decayed step size for both arms; Adam's moment estimates carry over
  (optimizer as unknown as { learningRate: number }).learningRate =
    config.learning_rate * FINETUNE_LR_FACTOR;
  const finetune = await runPhase(
    "finetune",
    config.epochs_finetune,
    useTopo ? combinedStep : bceStep,
  );

  const { summary } = await evaluateModel(model, opts.test, client);
  optimizer.dispose();
  return {
    report: {
      arm: config.arm,
      config,
      loss_curves: { pretrain, finetune },
      metrics: summary,
      test_cases: opts.test.length,
    },
    model,
  };
}

function predShape(batch: number): [number, number, number, number] {
  return [batch, 64, 64, 1];
}

/** Flat copies of every trainable weight, in build order. */
export function weightSnapshot(model: tf.LayersModel): Float32Array[] {
  return model.getWeights().map((t) => t.dataSync().slice() as Float32Array);
}

interface CliArgs {
  config: string;
  dataManifest: string;
  testManifest?: string;
  out: string;
  server?: string;
  stride: number;
  inputRaster: "image" | "degraded";
}

function parseCli(argv: string[]): CliArgs {
  const { values } = parseArgs({
    args: argv,
    options: {
      config: { type: "string" },
      "data-manifest": { type: "string" },
      "test-manifest": { type: "string" },
      out: { type: "string" },
      server: { type: "string" },
      stride: { type: "string", default: "32" },
      "input-raster": { type: "string", default: "image" },
    },
  });
  if (values.config === undefined || values["data-manifest"] === undefined || values.out === undefined) {
    throw new Error("usage: train --config config.json --data-manifest manifest.jsonl --out report.json");
  }
  if (values["input-raster"] !== "image" && values["input-raster"] !== "degraded") {
    throw new Error("--input-raster must be image or degraded");
  }
  return {
    config: values.config,
    dataManifest: values["data-manifest"],
    testManifest: values["test-manifest"],
    out: values.out,
    server: values.server,
    stride: Number(values.stride),
    inputRaster: values["input-raster"],
  };
}

/** Without a test manifest, cases (not patches) split 80/20 by seeded shuffle
 * so patches from one source image never straddle the split. */
export function splitCases<T>(entries: T[], seed: number): { train: T[]; test: T[] } {
  const order = shuffled(entries, `${seed}:split`);
  const cut = Math.max(1, Math.floor(order.length * 0.8));
  return { train: order.slice(0, cut), test: order.slice(cut) };
}

export async function runTrainCli(argv: string[]): Promise<void> {
  const args = parseCli(argv);
  const raw = JSON.parse(readFileSync(args.config, "utf8"));
  const { config, ignoredLambda } = resolveConfig(raw);

  const owned = args.server === undefined ? await startService() : null;
  const client = owned ? owned.client : new ServiceClient(args.server as string);
  try {
    if (!(await client.healthy())) {
      throw new Error(`service at ${owned ? owned.url : args.server} is not healthy`);
    }
    const entries = readManifest(args.dataManifest);
    let trainEntries = entries;
    let testEntries;
    if (args.testManifest !== undefined) {
      testEntries = readManifest(args.testManifest);
    } else {
      ({ train: trainEntries, test: testEntries } = splitCases(entries, config.seed));
    }
    const train = await loadPatches(client, trainEntries, args.stride, args.inputRaster);
    const test = await loadPatches(client, testEntries, args.stride, args.inputRaster);
    console.error(
      `training ${config.arm}: ${train.length} train patches, ${test.length} test patches`,
    );
    const { report } = await trainArm({
      config,
      train,
      test,
      client,
      warnIgnoredLambda: ignoredLambda,
      log: (line) => console.error(line),
    });
    writeFileSync(args.out, JSON.stringify(report, null, 2) + "\n");
    console.error(`report written to ${args.out}`);
  } finally {
    owned?.stop();
  }
}

const isMain = process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop() as string);
if (isMain) {
  runTrainCli(process.argv.slice(2)).catch((err) => {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    process.exit(1);
  });
}
