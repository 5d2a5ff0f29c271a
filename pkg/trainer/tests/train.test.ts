import * as tf from "@tensorflow/tfjs";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { MetricsReport } from "../src/client.js";
import { batchTensors, shuffled, toBatches } from "../src/data.js";
import { makeRaster } from "../src/rasters.js";
import { RunningService, startService } from "../src/service.js";
import {
  aggregate,
  resolveConfig,
  splitCases,
  summarizeMetrics,
  trainArm,
  weightSnapshot,
} from "../src/train.js";
import { samplePatches } from "./helpers.js";

describe("aggregation", () => {
  it("computes mean and population sd", () => {
    expect(aggregate([2, 4, 6])).toEqual({ mean: 4, sd: Math.sqrt(8 / 3), n: 3 });
    expect(aggregate([5])).toEqual({ mean: 5, sd: 0, n: 1 });
  });

  it("rejects an empty sample", () => {
    expect(() => aggregate([])).toThrow();
  });

  it("summarizes optional distance metrics only over defined values", () => {
    const reports: MetricsReport[] = [
      { dsc: 0.9, asd_mm: 1.0, hd95_mm: 2.0, betti0_error: 0 },
      { dsc: 0.7, betti0_error: 2 },
      { dsc: 0.8, asd_mm: 3.0, hd95_mm: 4.0, betti0_error: 1 },
    ];
    const summary = summarizeMetrics(reports);
    expect(summary.dsc.n).toBe(3);
    expect(summary.dsc.mean).toBeCloseTo(0.8, 12);
    expect(summary.betti0_error.mean).toBeCloseTo(1, 12);
    expect(summary.asd_mm).not.toBeNull();
    expect(summary.asd_mm!.n).toBe(2);
    expect(summary.asd_mm!.mean).toBeCloseTo(2.0, 12);
    expect(summary.hd95_mm!.mean).toBeCloseTo(3.0, 12);
  });

  it("returns null distance aggregates when no case defines them", () => {
    const summary = summarizeMetrics([{ dsc: 1, betti0_error: 0 }]);
    expect(summary.asd_mm).toBeNull();
    expect(summary.hd95_mm).toBeNull();
  });
});

describe("data plumbing", () => {
  it("shuffles deterministically per seed string", () => {
    const items = Array.from({ length: 30 }, (_, i) => i);
    const a = shuffled(items, "seed-a");
    const b = shuffled(items, "seed-a");
    const c = shuffled(items, "seed-b");
    expect(b).toEqual(a);
    expect(c).not.toEqual(a);
    expect([...a].sort((x, y) => x - y)).toEqual(items);
    expect(items[0]).toBe(0); // input untouched
  });

  it("keeps the final partial batch", () => {
    expect(toBatches([1, 2, 3, 4, 5, 6, 7], 3)).toEqual([[1, 2, 3], [4, 5, 6], [7]]);
    expect(toBatches([], 3)).toEqual([]);
  });

  it("stacks patches into NHWC tensors", () => {
    const batch = samplePatches("stack", 3);
    const { x, y } = batchTensors(batch);
    expect(x.shape).toEqual([3, 64, 64, 1]);
    expect(y.shape).toEqual([3, 64, 64, 1]);
    expect(x.dataSync()[5]).toBeCloseTo(batch[0].image.values[5], 6);
    tf.dispose([x, y]);
  });

  it("rejects patches of the wrong size", () => {
    const bad = { image: makeRaster(32, 32, new Float32Array(32 * 32)), gt: makeRaster(32, 32, new Float32Array(32 * 32)) };
    expect(() => batchTensors([bad])).toThrow();
  });

  it("splits cases deterministically, 80/20, without overlap", () => {
    const entries = Array.from({ length: 10 }, (_, i) => ({ id: i }));
    const first = splitCases(entries, 3);
    const again = splitCases(entries, 3);
    expect(again).toEqual(first);
    expect(first.train).toHaveLength(8);
    expect(first.test).toHaveLength(2);
    const ids = [...first.train, ...first.test].map((e) => e.id).sort((a, b) => a - b);
    expect(ids).toEqual(entries.map((e) => e.id));
    expect(splitCases(entries, 4)).not.toEqual(first);
  });
});

describe("optimizer step-size control", () => {
  it("honors a learning-rate change between phases", () => {
    // trainArm decays the rate at the phase boundary by assigning the
    // optimizer's learningRate; pin that tfjs applies the new value
    const w = tf.variable(tf.scalar(1));
    const optimizer = tf.train.adam(0.25);
    const loss = () => tf.mul(w, w) as tf.Scalar;
    optimizer.minimize(loss);
    const afterFirst = w.dataSync()[0];
    (optimizer as unknown as { learningRate: number }).learningRate = 0;
    optimizer.minimize(loss);
    expect(w.dataSync()[0]).toBe(afterFirst);
    optimizer.dispose();
    w.dispose();
  });
});

describe("config resolution", () => {
  it("flags lambda_topo on a baseline run as ignored", () => {
    expect(resolveConfig({ arm: "baseline", lambda_topo: 2 }).ignoredLambda).toBe(true);
    expect(resolveConfig({ arm: "baseline" }).ignoredLambda).toBe(false);
    expect(resolveConfig({ arm: "topocp", lambda_topo: 2 }).ignoredLambda).toBe(false);
    expect(resolveConfig({}).ignoredLambda).toBe(false);
  });
});

describe("training arms", () => {
  let service: RunningService;
  const train = samplePatches("arm-train", 8);
  const test = samplePatches("arm-test", 4);

  beforeAll(async () => {
    service = await startService();
  }, 60_000);

  afterAll(async () => {
    await service?.stop();
  });

  const smallConfig = (arm: "baseline" | "topocp", pre: number, fine: number) =>
    resolveConfig({
      arm,
      base_features: 4,
      depth: 2,
      epochs_pretrain: pre,
      epochs_finetune: fine,
      batch_size: 4,
      seed: 21,
      lambda_topo: 1.0,
    }).config;

  it("produces identical arms when both phases run zero epochs", async () => {
    const a = await trainArm({ config: smallConfig("baseline", 0, 0), train, test, client: service.client });
    const b = await trainArm({ config: smallConfig("topocp", 0, 0), train, test, client: service.client });
    expect(a.report.loss_curves).toEqual({ pretrain: [], finetune: [] });
    expect(b.report.loss_curves).toEqual({ pretrain: [], finetune: [] });
    expect(b.report.metrics).toEqual(a.report.metrics);
    const wa = weightSnapshot(a.model);
    const wb = weightSnapshot(b.model);
    expect(wb.length).toBe(wa.length);
    for (let i = 0; i < wa.length; i++) expect(Array.from(wb[i])).toEqual(Array.from(wa[i]));
    a.model.dispose();
    b.model.dispose();
  });

  it("pretrains to identical weights across arms under a fixed seed", async () => {
    const a = await trainArm({ config: smallConfig("baseline", 1, 0), train, test, client: service.client });
    const b = await trainArm({ config: smallConfig("topocp", 1, 0), train, test, client: service.client });
    expect(b.report.loss_curves.pretrain).toEqual(a.report.loss_curves.pretrain);
    const wa = weightSnapshot(a.model);
    const wb = weightSnapshot(b.model);
    for (let i = 0; i < wa.length; i++) expect(Array.from(wb[i])).toEqual(Array.from(wa[i]));
    a.model.dispose();
    b.model.dispose();
  });

  it("warns when a baseline run sets lambda_topo", async () => {
    const warned = vi.spyOn(console, "warn").mockImplementation(() => {});
    const { model } = await trainArm({
      config: smallConfig("baseline", 0, 0),
      train,
      test,
      client: service.client,
      warnIgnoredLambda: true,
    });
    model.dispose();
    expect(warned).toHaveBeenCalledWith(expect.stringContaining("lambda_topo is ignored"));
    warned.mockRestore();
  });

  it("runs the combined phase and reports service metrics", async () => {
    const { report, model } = await trainArm({
      config: smallConfig("topocp", 1, 2),
      train,
      test,
      client: service.client,
    });
    model.dispose();
    expect(report.arm).toBe("topocp");
    expect(report.loss_curves.pretrain).toHaveLength(1);
    expect(report.loss_curves.finetune).toHaveLength(2);
    for (const v of [...report.loss_curves.pretrain, ...report.loss_curves.finetune]) {
      expect(Number.isFinite(v)).toBe(true);
    }
    expect(report.test_cases).toBe(test.length);
    expect(report.metrics.dsc.n).toBe(test.length);
    expect(report.metrics.dsc.mean).toBeGreaterThanOrEqual(0);
    expect(report.metrics.dsc.mean).toBeLessThanOrEqual(1);
    expect(report.metrics.betti0_error.mean).toBeGreaterThanOrEqual(0);
  }, 240_000);
});
