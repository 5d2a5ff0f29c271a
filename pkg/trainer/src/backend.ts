// Backend bootstrap for training. The WASM backend ships fast XNNPACK
// forward kernels but lacks Conv2DBackpropFilter and implements
// Conv2DBackpropInput as a scalar loop, so both gradients are replaced
// here with compositions of forward conv2d (stride 1, NHWC only, which
// is all the segmentation net uses).
import * as tf from "@tensorflow/tfjs";
import { registerKernel, unregisterKernel } from "@tensorflow/tfjs";
import type { Tensor4D, TensorInfo } from "@tensorflow/tfjs";

let initPromise: Promise<string> | null = null;

/** Activate the WASM backend if available, else keep the default backend. */
export function initBackend(): Promise<string> {
  if (initPromise === null) {
    initPromise = doInit();
  }
  return initPromise;
}

async function doInit(): Promise<string> {
  try {
    const wasm = await import("@tensorflow/tfjs-backend-wasm");
    const { createRequire } = await import("node:module");
    const { dirname, join } = await import("node:path");
    const require = createRequire(import.meta.url);
    const wasmDir = dirname(
      require.resolve("@tensorflow/tfjs-backend-wasm/dist/tfjs-backend-wasm.wasm"),
    );
    wasm.setWasmPaths(join(wasmDir, "/"));
    const ok = await tf.setBackend("wasm");
    if (ok) {
      registerConvGradKernels();
    }
  } catch {
    // fall through to whichever backend tf selected
  }
  await tf.ready();
  return tf.getBackend();
}

interface Pads {
  top: number;
  bottom: number;
  left: number;
  right: number;
}

type PadMode = "same" | "valid" | number | [number, number][];

/** Padding amounts for a stride-1 conv, following the floor(total/2) top rule. */
export function resolvePads(pad: PadMode, kh: number, kw: number): Pads {
  if (pad === "same") {
    const top = Math.floor((kh - 1) / 2);
    const left = Math.floor((kw - 1) / 2);
    return { top, bottom: kh - 1 - top, left, right: kw - 1 - left };
  }
  if (pad === "valid") {
    return { top: 0, bottom: 0, left: 0, right: 0 };
  }
  if (typeof pad === "number") {
    return { top: pad, bottom: pad, left: pad, right: pad };
  }
  if (Array.isArray(pad) && pad.length === 4) {
    return { top: pad[1][0], bottom: pad[1][1], left: pad[2][0], right: pad[2][1] };
  }
  throw new Error(`unsupported conv padding ${JSON.stringify(pad)}`);
}

/**
 * Filter gradient dW[a,b,ci,co] = sum_n,i,j xPad[n,i+a,j+b,ci] * dy[n,i,j,co],
 * computed as one conv2d with batch and channel axes swapped: the padded
 * input becomes a [ci, Hp, Wp, n] batch convolved "valid" against dy
 * reshaped to an [Ho, Wo, n, co] filter.
 */
export function conv2dFilterGrad(
  x: Tensor4D,
  dy: Tensor4D,
  filterShape: [number, number, number, number],
  pads: Pads,
): Tensor4D {
  return tf.tidy(() => {
    const xPad = tf.pad(x, [
      [0, 0],
      [pads.top, pads.bottom],
      [pads.left, pads.right],
      [0, 0],
    ]) as Tensor4D;
    const xT = tf.transpose(xPad, [3, 1, 2, 0]) as Tensor4D;
    const dyT = tf.transpose(dy, [1, 2, 0, 3]) as Tensor4D;
    const out = tf.conv2d(xT, dyT, 1, "valid");
    const grad = tf.transpose(out, [1, 2, 0, 3]) as Tensor4D;
    const [kh, kw, ci, co] = filterShape;
    const got = grad.shape;
    if (got[0] !== kh || got[1] !== kw || got[2] !== ci || got[3] !== co) {
      throw new Error(`filter grad shape ${got} does not match ${filterShape}`);
    }
    return grad;
  });
}

/**
 * Input gradient dX = conv2d(pad(dy, k-1 minus the forward pads),
 * rot180(W) with in/out channels swapped), stride 1, valid.
 */
export function conv2dInputGrad(
  dy: Tensor4D,
  filter: Tensor4D,
  inputShape: [number, number, number, number],
  pads: Pads,
): Tensor4D {
  return tf.tidy(() => {
    const [kh, kw] = [filter.shape[0], filter.shape[1]];
    const grow = {
      top: kh - 1 - pads.top,
      bottom: kh - 1 - pads.bottom,
      left: kw - 1 - pads.left,
      right: kw - 1 - pads.right,
    };
    if (grow.top < 0 || grow.bottom < 0 || grow.left < 0 || grow.right < 0) {
      throw new Error("composed input grad requires pads below the kernel size");
    }
    const dyPad = tf.pad(dy, [
      [0, 0],
      [grow.top, grow.bottom],
      [grow.left, grow.right],
      [0, 0],
    ]) as Tensor4D;
    const wRot = tf.transpose(tf.reverse(filter, [0, 1]), [0, 1, 3, 2]) as Tensor4D;
    const grad = tf.conv2d(dyPad, wRot, 1, "valid");
    const got = grad.shape;
    if (
      got[0] !== inputShape[0] ||
      got[1] !== inputShape[1] ||
      got[2] !== inputShape[2] ||
      got[3] !== inputShape[3]
    ) {
      throw new Error(`input grad shape ${got} does not match ${inputShape}`);
    }
    return grad;
  });
}

/**
 * Gradient of 2x2 stride-2 max pooling over even spatial dims. Windows are
 * exposed as axes of a 6-D view; cells equal to the pooled max share the
 * incoming gradient equally (ties split it instead of picking one winner).
 */
export function maxPool2x2Grad(dy: Tensor4D, x: Tensor4D, pooled: Tensor4D): Tensor4D {
  return tf.tidy(() => {
    const [n, h, w, c] = x.shape;
    if (h % 2 !== 0 || w % 2 !== 0) {
      throw new Error("composed MaxPoolGrad requires even spatial dims");
    }
    const [ho, wo] = [h / 2, w / 2];
    const x6 = tf.reshape(x, [n, ho, 2, wo, 2, c]);
    const max6 = tf.reshape(pooled, [n, ho, 1, wo, 1, c]);
    const mask = tf.cast(tf.equal(x6, max6), "float32");
    const count = tf.sum(mask, [2, 4], true);
    const dy6 = tf.reshape(dy, [n, ho, 1, wo, 1, c]);
    const grad = tf.div(tf.mul(mask, dy6), count);
    return tf.reshape(grad, [n, h, w, c]) as Tensor4D;
  });
}

/**
 * Gradient of integer-factor nearest-neighbor upsampling (the default
 * floor mapping): each source pixel accumulates the gradient of the
 * factor-by-factor block it produced.
 */
export function upsampleNearestGrad(dy: Tensor4D, inputShape: [number, number, number, number]): Tensor4D {
  return tf.tidy(() => {
    const [n, hi, wi, c] = inputShape;
    const [ho, wo] = [dy.shape[1], dy.shape[2]];
    if (ho % hi !== 0 || wo % wi !== 0) {
      throw new Error("composed resize grad requires integer upsampling factors");
    }
    const dy6 = tf.reshape(dy, [n, hi, ho / hi, wi, wo / wi, c]);
    return tf.sum(dy6, [2, 4]) as Tensor4D;
  });
}

interface WasmDataBackend {
  incRef(dataId: object): void;
}

function requireStrideOneNhwc(
  kernel: string,
  strides: number | [number, number],
  dataFormat: string | undefined,
): void {
  const strideOne =
    strides === 1 || (Array.isArray(strides) && strides[0] === 1 && strides[1] === 1);
  if (!strideOne || (dataFormat !== undefined && dataFormat !== "NHWC")) {
    throw new Error(`composed ${kernel} supports stride 1, NHWC only`);
  }
}

/** Wrap kernel inputs as tensors without letting disposal free their data. */
function wrapInputs(backend: unknown, infos: TensorInfo[]): Tensor4D[] {
  // makeTensorFromTensorInfo does not bump the backend refcount, but
  // dispose always drops it; pre-increment so the inputs survive us.
  const dataBackend = backend as WasmDataBackend;
  const engine = tf.engine();
  return infos.map((info) => {
    dataBackend.incRef(info.dataId);
    return engine.makeTensorFromTensorInfo(info) as Tensor4D;
  });
}

function registerConvGradKernels(): void {
  // The stock wasm backend targets inference; its MaxPoolGrad drops some
  // gradients and its ResizeNearestNeighborGrad mishandles batches beyond
  // the first, so those are replaced along with the conv gradients.
  // Conv2DBackpropFilter only exists once this function has run, but
  // clearing it too keeps a re-run (fresh module state, shared tfjs
  // registry) quiet.
  for (const name of [
    "Conv2DBackpropFilter",
    "Conv2DBackpropInput",
    "MaxPoolGrad",
    "ResizeNearestNeighborGrad",
  ]) {
    try {
      unregisterKernel(name, "wasm");
    } catch {
      // nothing to replace on older bundles
    }
  }
  registerKernel({
    kernelName: "Conv2DBackpropFilter",
    backendName: "wasm",
    kernelFunc: ({ inputs, backend, attrs }) => {
      const { x, dy } = inputs as { x: TensorInfo; dy: TensorInfo };
      const a = attrs as unknown as {
        strides: number | [number, number];
        pad: PadMode;
        dataFormat?: string;
        filterShape: [number, number, number, number];
      };
      requireStrideOneNhwc("Conv2DBackpropFilter", a.strides, a.dataFormat);
      const pads = resolvePads(a.pad, a.filterShape[0], a.filterShape[1]);
      const [xT, dyT] = wrapInputs(backend, [x, dy]);
      try {
        return conv2dFilterGrad(xT, dyT, a.filterShape, pads);
      } finally {
        xT.dispose();
        dyT.dispose();
      }
    },
  });
  registerKernel({
    kernelName: "Conv2DBackpropInput",
    backendName: "wasm",
    kernelFunc: ({ inputs, backend, attrs }) => {
      const { dy, filter } = inputs as { dy: TensorInfo; filter: TensorInfo };
      const a = attrs as unknown as {
        strides: number | [number, number];
        pad: PadMode;
        dataFormat?: string;
        inputShape: [number, number, number, number];
      };
      requireStrideOneNhwc("Conv2DBackpropInput", a.strides, a.dataFormat);
      const [kh, kw] = [filter.shape[0], filter.shape[1]];
      const pads = resolvePads(a.pad, kh, kw);
      const [dyT, filterT] = wrapInputs(backend, [dy, filter]);
      try {
        return conv2dInputGrad(dyT, filterT, a.inputShape, pads);
      } finally {
        dyT.dispose();
        filterT.dispose();
      }
    },
  });
  registerKernel({
    kernelName: "MaxPoolGrad",
    backendName: "wasm",
    kernelFunc: ({ inputs, backend, attrs }) => {
      const { dy, input, output } = inputs as {
        dy: TensorInfo;
        input: TensorInfo;
        output: TensorInfo;
      };
      const a = attrs as unknown as {
        filterSize: number | [number, number];
        strides: number | [number, number];
        pad: PadMode;
      };
      const two = (v: number | [number, number]) =>
        v === 2 || (Array.isArray(v) && v[0] === 2 && v[1] === 2);
      if (!two(a.filterSize) || !two(a.strides) || (a.pad !== "same" && a.pad !== "valid")) {
        throw new Error("composed MaxPoolGrad supports 2x2 windows with stride 2 only");
      }
      const [dyT, xT, pooledT] = wrapInputs(backend, [dy, input, output]);
      try {
        return maxPool2x2Grad(dyT, xT, pooledT);
      } finally {
        dyT.dispose();
        xT.dispose();
        pooledT.dispose();
      }
    },
  });
  registerKernel({
    kernelName: "ResizeNearestNeighborGrad",
    backendName: "wasm",
    kernelFunc: ({ inputs, backend, attrs }) => {
      const { dy, images } = inputs as { dy: TensorInfo; images: TensorInfo };
      const a = attrs as unknown as { alignCorners?: boolean; halfPixelCenters?: boolean };
      if (a.alignCorners === true || a.halfPixelCenters === true) {
        throw new Error("composed resize grad supports the default floor mapping only");
      }
      const [dyT] = wrapInputs(backend, [dy]);
      try {
        return upsampleNearestGrad(dyT, images.shape as [number, number, number, number]);
      } finally {
        dyT.dispose();
      }
    },
  });
}
