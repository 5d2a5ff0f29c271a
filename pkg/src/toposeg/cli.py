"""Command-line front end.

Subcommands map one-to-one onto library concerns: ``diagram`` (persistence
CSV), ``loss`` (topological loss value and optional gradient raster),
``metrics`` (segmentation quality JSON), ``betti`` (connected components and
holes of a thresholded mask), ``synth`` (seeded synthetic dataset), and
``serve`` (HTTP service). All outputs are deterministic: identical inputs
produce byte-identical outputs.

Exit codes: 0 success, 1 data error (reported as ``ERROR <CODE>: <detail>``
on stderr), 2 usage error.

With ``--server URL`` the read-evaluate subcommands delegate to a running
service instead of computing in-process; file paths are still read and
written locally.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
import tempfile
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

from .errors import DataError
from .loss import topo_loss
from .metrics import evaluate
from .persistence import betti_numbers, compute_persistence, diagram_to_csv
from .rasters import (
    BinaryMask,
    RasterFormat,
    Spacing,
    binarize,
    load_raster,
    signed_f32r_bytes,
    write_raster,
)
from .synth import RibbonSpec, gen_ribbon, manifest_line


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}")
    if not dims or any(d not in (0, 1) for d in dims) or len(set(dims)) != len(dims):
        raise argparse.ArgumentTypeError(f"dims must be a subset of 0,1; got {text!r}")
    return dims


def _atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: str, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _load_mask(path: str, threshold: float) -> BinaryMask:
    return binarize(load_raster(path), threshold)


# --- thin-client plumbing ---------------------------------------------------


def _post(server: str, route: str, payload: dict) -> dict:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        server.rstrip("/") + route,
        data=body,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as err:
        detail = err.read().decode("utf-8", "replace")
        try:
            parsed = json.loads(detail)
        except json.JSONDecodeError:
            parsed = None
        if isinstance(parsed, dict) and "error" in parsed:
            raise _RemoteDataError(parsed["error"], parsed.get("detail", ""))
        raise DataError(f"server returned HTTP {err.code}: {detail[:200]}")


class _RemoteDataError(DataError):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code


def _b64_file(path: str) -> str:
    with open(path, "rb") as fh:
        return base64.b64encode(fh.read()).decode("ascii")


# --- subcommand handlers ----------------------------------------------------


def _cmd_diagram(args) -> int:
    if args.server:
        reply = _post(
            args.server, "/diagram", {"raster_b64": _b64_file(args.input), "dims": list(args.dims)}
        )
        csv_text = reply["csv"]
    else:
        diagram = compute_persistence(load_raster(args.input))
        csv_text = diagram_to_csv(diagram, dims=args.dims)
    if args.out:
        _atomic_write_text(args.out, csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def _loss_one(pred_path: str, gt_path: str, grad_out: str | None, args) -> float:
    if args.server:
        reply = _post(
            args.server,
            "/loss",
            {
                "pred_b64": _b64_file(pred_path),
                "gt_b64": _b64_file(gt_path),
                "dims": list(args.dims),
                "weight": args.weight,
                "want_grad": grad_out is not None,
            },
        )
        value = float(reply["topo_loss"])
        if grad_out is not None:
            _atomic_write_bytes(grad_out, base64.b64decode(reply["grad_b64"]))
        return value
    pred = load_raster(pred_path)
    gt = binarize(load_raster(gt_path), 0.5)
    result = topo_loss(pred, gt, dims=args.dims, weight=args.weight)
    if grad_out is not None:
        _atomic_write_bytes(grad_out, signed_f32r_bytes(result.grad))
    return result.value


def _cmd_loss(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError(f"{len(args.pred)} predictions vs {len(args.gt)} ground truths")
    pairs = list(zip(args.pred, args.gt))
    single = len(pairs) == 1
    if single:
        grad_path = args.grad_out
        value = _loss_one(pairs[0][0], pairs[0][1], grad_path, args)
        sys.stdout.write(json.dumps({"topo_loss": value}) + "\n")
        return 0
    grad_dir = args.grad_out
    if grad_dir is not None:
        os.makedirs(grad_dir, exist_ok=True)

    def run(pair):
        pred_path, gt_path = pair
        grad_path = None
        if grad_dir is not None:
            stem = os.path.splitext(os.path.basename(pred_path))[0]
            grad_path = os.path.join(grad_dir, stem + ".grad.f32r")
        return _loss_one(pred_path, gt_path, grad_path, args)

    values = _run_pairs(run, pairs, args.jobs)
    for (pred_path, gt_path), value in zip(pairs, values):
        line = {"pred": pred_path, "gt": gt_path, "topo_loss": value}
        sys.stdout.write(json.dumps(line) + "\n")
    return 0


def _metrics_one(pred_path: str, gt_path: str, args) -> dict:
    if args.server:
        return _post(
            args.server,
            "/metrics",
            {
                "pred_b64": _b64_file(pred_path),
                "gt_b64": _b64_file(gt_path),
                "threshold": args.threshold,
                "spacing": list(args.spacing),
            },
        )
    pred = load_raster(pred_path)
    gt = binarize(load_raster(gt_path), 0.5)
    spacing = Spacing(args.spacing[0], args.spacing[1])
    report = evaluate(pred, gt, spacing=spacing, threshold=args.threshold)
    return report.to_dict()


def _cmd_metrics(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError(f"{len(args.pred)} predictions vs {len(args.gt)} ground truths")
    pairs = list(zip(args.pred, args.gt))
    reports = _run_pairs(lambda pair: _metrics_one(pair[0], pair[1], args), pairs, args.jobs)
    if len(pairs) == 1:
        sys.stdout.write(json.dumps(reports[0]) + "\n")
        return 0
    for (pred_path, gt_path), report in zip(pairs, reports):
        line = {"pred": pred_path, "gt": gt_path, **report}
        sys.stdout.write(json.dumps(line) + "\n")
    return 0


def _run_pairs(fn, pairs, jobs: int):
    if jobs <= 1 or len(pairs) <= 1:
        return [fn(pair) for pair in pairs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, pairs))


def _cmd_betti(args) -> int:
    if args.server:
        reply = _post(
            args.server,
            "/betti",
            {"mask_b64": _b64_file(args.mask), "threshold": args.threshold},
        )
        b0, b1 = reply["b0"], reply["b1"]
    else:
        b0, b1 = betti_numbers(_load_mask(args.mask, args.threshold))
    sys.stdout.write(f"b0={b0} b1={b1}\n")
    return 0


def _cmd_synth(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    lines = []
    for i in range(args.count):
        spec = RibbonSpec(
            seed=args.seed + i,
            size=args.size,
            components=args.components,
            holes=args.holes,
            thickness=args.thickness,
            break_count=args.breaks,
            blur_radius=args.blur,
        )
        clean, gt, degraded = gen_ribbon(spec)
        case_id = f"case_{i:04d}"
        image_path = os.path.join(args.out_dir, f"{case_id}_image.f32r")
        gt_path = os.path.join(args.out_dir, f"{case_id}_gt.pgm")
        degraded_path = os.path.join(args.out_dir, f"{case_id}_degraded.f32r")
        _atomic_write_bytes(image_path, write_raster(clean, RasterFormat.F32R))
        _atomic_write_bytes(gt_path, write_raster(gt.as_likelihood(), RasterFormat.PGM8))
        _atomic_write_bytes(degraded_path, write_raster(degraded, RasterFormat.F32R))
        line = manifest_line(case_id, image_path, gt_path, degraded_path, spec)
        lines.append(line)
        sys.stdout.write(line + "\n")
    _atomic_write_text(os.path.join(args.out_dir, "manifest.jsonl"), "".join(s + "\n" for s in lines))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toposeg",
        description="Topology-aware segmentation toolkit: persistence diagrams, "
        "topological loss, metrics, and synthetic data.",
    )
    parser.add_argument(
        "--server",
        metavar="URL",
        default=None,
        help="delegate computation to a running service at URL",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("diagram", help="persistence diagram of a raster as CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None, help="CSV destination (default stdout)")
    p.add_argument("--dims", type=_parse_dims, default=(0, 1))
    p.set_defaults(func=_cmd_diagram)

    p = sub.add_parser("loss", help="topological loss between prediction and ground truth")
    p.add_argument("--pred", required=True, nargs="+")
    p.add_argument("--gt", required=True, nargs="+")
    p.add_argument("--dims", type=_parse_dims, default=(0, 1))
    p.add_argument("--lambda", dest="weight", type=float, default=1.0)
    p.add_argument(
        "--grad-out",
        default=None,
        help="gradient raster destination (directory when multiple pairs are given)",
    )
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("metrics", help="segmentation quality report as JSON")
    p.add_argument("--pred", required=True, nargs="+")
    p.add_argument("--gt", required=True, nargs="+")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--spacing", type=float, nargs=2, default=(1.0, 1.0), metavar=("DY", "DX"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("betti", help="connected components and holes of a thresholded mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_betti)

    p = sub.add_parser("synth", help="generate a seeded synthetic ribbon dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--components", type=int, default=1)
    p.add_argument("--holes", type=int, default=1)
    p.add_argument("--thickness", type=int, default=3)
    p.add_argument("--breaks", type=int, default=0)
    p.add_argument("--blur", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=_cmd_serve)

    return parser


def cli_main(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except DataError as err:
        sys.stderr.write(f"ERROR {err.code}: {err}\n")
        return 1
    except OSError as err:
        sys.stderr.write(f"ERROR IO_ERROR: {err}\n")
        return 1
    except (UsageError, ValueError) as err:
        sys.stderr.write(f"usage error: {err}\n")
        return 2


def entrypoint() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
