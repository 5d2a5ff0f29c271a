/** HTTP client for the segmentation toolkit service.  All rasters travel
 * base64-encoded in the toolkit's own file formats, so values seen here are
 * bit-identical to what the CLI reads and writes. */

import {
  Raster,
  decodeF32r,
  decodeRaster,
  encodeF32r,
  encodePgm8,
  fromBase64,
  toBase64,
} from "./rasters.js";

export class ServiceError extends Error {
  constructor(readonly code: string, detail: string, readonly status: number) {
    super(`${code}: ${detail}`);
  }
}

export interface MetricsReport {
  dsc: number;
  asd_mm?: number;
  hd95_mm?: number;
  betti0_error: number;
}

export interface LossResult {
  topoLoss: number;
  /** exact per-pixel gradient, present when requested */
  grad?: Raster;
}

function predB64(pred: Raster): string {
  return toBase64(encodeF32r(pred));
}

function maskB64(mask: Raster): string {
  return toBase64(encodePgm8(mask));
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private async post<T>(route: string, body: unknown): Promise<T> {
    const payload = JSON.stringify(body);
    let reply: Response | null = null;
    // every endpoint is a pure computation, so a transport failure (for
    // instance the server reaping an idle keep-alive socket) is retried once
    for (let attempt = 0; reply === null; attempt++) {
      try {
        reply = await fetch(this.baseUrl + route, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: payload,
        });
      } catch (err) {
        if (attempt >= 2) {
          // undici hides the transport problem behind "fetch failed"
          const cause =
            err instanceof Error && err.cause instanceof Error ? `: ${err.cause.message}` : "";
          throw new ServiceError("UNREACHABLE", `${route}${cause}`, 0);
        }
        await new Promise((resolve) => setTimeout(resolve, 50 * (attempt + 1)));
      }
    }
    if (!reply.ok) {
      let code = `HTTP_${reply.status}`;
      let detail = reply.statusText;
      try {
        const parsed = (await reply.json()) as { error?: string; detail?: unknown };
        if (parsed.error) code = parsed.error;
        if (parsed.detail !== undefined) detail = JSON.stringify(parsed.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(code, detail, reply.status);
    }
    return (await reply.json()) as T;
  }

  async healthy(): Promise<boolean> {
    try {
      const reply = await fetch(this.baseUrl + "/healthz");
      return reply.ok;
    } catch {
      return false;
    }
  }

  async betti(mask: Raster, threshold = 0.5): Promise<{ b0: number; b1: number }> {
    return this.post("/betti", { mask_b64: predB64(mask), threshold });
  }

  async loss(pred: Raster, gt: Raster, weight = 1.0, wantGrad = false): Promise<LossResult> {
    const body = await this.post<{ topo_loss: number; grad_b64?: string }>("/loss", {
      pred_b64: predB64(pred),
      gt_b64: maskB64(gt),
      weight,
      want_grad: wantGrad,
    });
    return decodeLoss(body);
  }

  async lossBatch(
    items: { pred: Raster; gt: Raster }[],
    weight = 1.0,
    wantGrad = false,
  ): Promise<LossResult[]> {
    const body = await this.post<{ results: { topo_loss: number; grad_b64?: string }[] }>(
      "/loss/batch",
      {
        items: items.map(({ pred, gt }) => ({
          pred_b64: predB64(pred),
          gt_b64: maskB64(gt),
          weight,
          want_grad: wantGrad,
        })),
      },
    );
    return body.results.map(decodeLoss);
  }

  async metrics(pred: Raster, gt: Raster, threshold = 0.5): Promise<MetricsReport> {
    return this.post("/metrics", {
      pred_b64: predB64(pred),
      gt_b64: maskB64(gt),
      threshold,
    });
  }

  async patches(
    image: Raster,
    gt: Raster,
    stride = 32,
  ): Promise<{ image: Raster; gt: Raster; originRow: number; originCol: number }[]> {
    const body = await this.post<{
      patches: { image_b64: string; gt_b64: string; origin_row: number; origin_col: number }[];
    }>("/patches", { image_b64: predB64(image), gt_b64: maskB64(gt), stride });
    return body.patches.map((p) => ({
      image: decodeF32r(fromBase64(p.image_b64)),
      gt: decodeRaster(fromBase64(p.gt_b64)),
      originRow: p.origin_row,
      originCol: p.origin_col,
    }));
  }
}

function decodeLoss(body: { topo_loss: number; grad_b64?: string }): LossResult {
  const result: LossResult = { topoLoss: body.topo_loss };
  if (body.grad_b64 !== undefined) {
    result.grad = decodeF32r(fromBase64(body.grad_b64), { signed: true });
  }
  return result;
}
