/** Directional study: baseline vs topology-regularized training.
 *
 * For each seed a fresh synthetic ribbon dataset is generated through the
 * toolkit CLI, both arms train on identical patches with identical phase-1
 * schedules, and test metrics come from the service.  The input raster is
 * the degraded rendering (ribbons with injected gaps) and the target is the
 * intact mask, so restoring topology is the heart of the task.
 *
 * Per-seed verdict: the topocp arm must not exceed the baseline's mean
 * component-count error and must stay within 0.02 mean Dice of it.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { parseArgs } from "node:util";

import { ServiceClient } from "./client.js";
import { PatchSample, loadPatches, shuffled } from "./data.js";
import { ManifestEntry, readManifest } from "./rasters.js";
import { startService } from "./service.js";
import { ArmReport, trainArm } from "./train.js";
import { parseTrainConfig } from "./unet.js";

interface CorpusGroup {
  components: number;
  holes: number;
  thickness: number;
  breaks: number;
  blur: number;
  count: number;
}

// thin ribbons, several injected gaps, strong blur: the degraded input
// carries 1-2 genuine component errors per image, so repairing topology
// (not just matching pixels) is what separates the arms
const CORPUS_GROUPS: CorpusGroup[] = [
  { components: 1, holes: 1, thickness: 2, breaks: 2, blur: 1.5, count: 21 },
  { components: 2, holes: 1, thickness: 2, breaks: 2, blur: 1.5, count: 21 },
  { components: 2, holes: 2, thickness: 2, breaks: 3, blur: 1.5, count: 21 },
];

const TRAIN_CASES = 50;
const TEST_CASES = 13;
const TRAIN_PATCHES = 200;
const TEST_PATCHES = 50;

function synthGroup(outDir: string, group: CorpusGroup, seed: number): ManifestEntry[] {
  // a rare placement failure aborts the CLI; retry from a shifted seed
  for (let attempt = 0; attempt < 3; attempt++) {
    const attemptSeed = seed + attempt * 1000;
    const res = spawnSync(
      "python3",
      [
        "-m", "toposeg", "synth",
        "--seed", String(attemptSeed),
        "--count", String(group.count),
        "--components", String(group.components),
        "--holes", String(group.holes),
        "--thickness", String(group.thickness),
        "--breaks", String(group.breaks),
        "--blur", String(group.blur),
        "--out-dir", outDir,
      ],
      { stdio: ["ignore", "ignore", "pipe"] },
    );
    if (res.status === 0) {
      return readManifest(join(outDir, "manifest.jsonl"));
    }
  }
  throw new Error(`dataset generation kept failing for ${JSON.stringify(group)}`);
}

export interface SeedDataset {
  train: PatchSample[];
  test: PatchSample[];
}

export async function buildSeedDataset(
  client: ServiceClient,
  root: string,
  seed: number,
): Promise<SeedDataset> {
  const entries: ManifestEntry[] = [];
  CORPUS_GROUPS.forEach((group, k) => {
    const dir = join(root, `seed_${seed}`, `group_${k}`);
    entries.push(...synthGroup(dir, group, seed * 1000 + k * 100));
  });
  const order = shuffled(entries, `${seed}:cases`);
  const trainEntries = order.slice(0, TRAIN_CASES);
  const testEntries = order.slice(TRAIN_CASES, TRAIN_CASES + TEST_CASES);
  const train = (await loadPatches(client, trainEntries, 32, "degraded")).slice(0, TRAIN_PATCHES);
  const test = (await loadPatches(client, testEntries, 32, "degraded")).slice(0, TEST_PATCHES);
  return { train, test };
}

export interface SeedOutcome {
  seed: number;
  baseline: ArmReport;
  topocp: ArmReport;
  betti0_ok: boolean;
  dsc_ok: boolean;
  pass: boolean;
  runtime_s: number;
}

export function judge(baseline: ArmReport, topocp: ArmReport): { betti0_ok: boolean; dsc_ok: boolean } {
  return {
    betti0_ok: topocp.metrics.betti0_error.mean <= baseline.metrics.betti0_error.mean,
    dsc_ok: topocp.metrics.dsc.mean >= baseline.metrics.dsc.mean - 0.02,
  };
}

export async function runSeed(
  client: ServiceClient,
  dataRoot: string,
  seed: number,
  lambdaTopo: number,
  log: (line: string) => void,
): Promise<SeedOutcome> {
  const started = Date.now();
  const { train, test } = await buildSeedDataset(client, dataRoot, seed);
  log(`seed ${seed}: ${train.length} train / ${test.length} test patches`);
  const arms: ArmReport[] = [];
  for (const arm of ["baseline", "topocp"] as const) {
    const config = parseTrainConfig({ arm, seed, lambda_topo: arm === "topocp" ? lambdaTopo : 0 });
    const { report, model } = await trainArm({ config, train, test, client, log });
    model.dispose();
    arms.push(report);
    log(
      `seed ${seed} ${arm}: dsc ${report.metrics.dsc.mean.toFixed(4)} ` +
        `betti0 ${report.metrics.betti0_error.mean.toFixed(4)}`,
    );
  }
  const [baseline, topocp] = arms;
  const { betti0_ok, dsc_ok } = judge(baseline, topocp);
  return {
    seed,
    baseline,
    topocp,
    betti0_ok,
    dsc_ok,
    pass: betti0_ok && dsc_ok,
    runtime_s: (Date.now() - started) / 1000,
  };
}

export interface ExperimentReport {
  seeds: SeedOutcome[];
  passes: number;
  required: number;
  verdict: boolean;
  lambda_topo: number;
  runtime_s: number;
}

export async function runExperiment(opts: {
  seeds: number[];
  lambdaTopo: number;
  out: string;
  server?: string;
  keepData?: boolean;
  log?: (line: string) => void;
}): Promise<ExperimentReport> {
  const log = opts.log ?? ((line: string) => console.error(line));
  const started = Date.now();
  const dataRoot = mkdtempSync(join(tmpdir(), "ribbon-exp-"));
  const owned = opts.server === undefined ? await startService() : null;
  const client = owned ? owned.client : new ServiceClient(opts.server as string);
  try {
    if (!(await client.healthy())) throw new Error("service is not healthy");
    const seeds: SeedOutcome[] = [];
    for (const seed of opts.seeds) {
      const outcome = await runSeed(client, dataRoot, seed, opts.lambdaTopo, log);
      seeds.push(outcome);
      log(
        `seed ${seed} verdict: ${outcome.pass ? "pass" : "FAIL"} ` +
          `(betti0 ${outcome.betti0_ok ? "ok" : "worse"}, dsc ${outcome.dsc_ok ? "ok" : "dropped"}) ` +
          `in ${outcome.runtime_s.toFixed(0)}s`,
      );
    }
    const passes = seeds.filter((s) => s.pass).length;
    const required = Math.min(4, opts.seeds.length);
    const report: ExperimentReport = {
      seeds,
      passes,
      required,
      verdict: passes >= required,
      lambda_topo: opts.lambdaTopo,
      runtime_s: (Date.now() - started) / 1000,
    };
    writeFileSync(opts.out, JSON.stringify(report, null, 2) + "\n");
    log(`experiment: ${passes}/${opts.seeds.length} seeds pass, report at ${opts.out}`);
    return report;
  } finally {
    owned?.stop();
    if (!opts.keepData) rmSync(dataRoot, { recursive: true, force: true });
  }
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() as string);
if (isMain) {
  const { values } = parseArgs({
    options: {
      seeds: { type: "string", default: "1,2,3,4,5" },
      lambda: { type: "string", default: "0.5" },
      out: { type: "string", default: "experiment_report.json" },
      server: { type: "string" },
      "keep-data": { type: "boolean", default: false },
    },
  });
  runExperiment({
    seeds: (values.seeds as string).split(",").map((s) => Number(s.trim())),
    lambdaTopo: Number(values.lambda),
    out: values.out as string,
    server: values.server,
    keepData: values["keep-data"] as boolean,
  }).catch((err) => {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    process.exit(1);
  });
}
