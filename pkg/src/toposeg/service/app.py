"""HTTP service exposing the toolkit to out-of-process consumers.

Every computational route is a POST with a JSON body (schemas module);
rasters are base64-encoded PGM or F32R bytes. Domain data errors map to
HTTP 400 with a stable machine-readable ``error`` code; malformed JSON or
missing fields get FastAPI's usual 422.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DataError, MalformedHeader
from ..loss import topo_loss
from ..metrics import evaluate
from ..persistence import betti_numbers, compute_persistence, diagram_to_csv
from ..rasters import (
    BinaryMask,
    LikelihoodMap,
    RasterFormat,
    Spacing,
    binarize,
    detect_format,
    read_raster,
    signed_f32r_bytes,
    write_raster,
)
from ..synth import RibbonSpec, augment, extract_patches, gen_ribbon
from . import schemas


def _decode_raster(b64: str) -> LikelihoodMap:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise MalformedHeader("raster payload is not valid base64")
    return read_raster(raw, detect_format(raw))


def _decode_mask(b64: str, threshold: float = 0.5) -> BinaryMask:
    return binarize(_decode_raster(b64), threshold)


def _encode_likelihood(lmap: LikelihoodMap, fmt: RasterFormat) -> str:
    return base64.b64encode(write_raster(lmap, fmt)).decode("ascii")


def _encode_grad(grad: np.ndarray) -> str:
    return base64.b64encode(signed_f32r_bytes(grad)).decode("ascii")


def _loss_item(item: schemas.LossRequest) -> schemas.LossResponse:
    pred = _decode_raster(item.pred_b64)
    gt = _decode_mask(item.gt_b64)
    result = topo_loss(pred, gt, dims=tuple(item.dims), weight=item.weight)
    grad_b64 = _encode_grad(result.grad) if item.want_grad else None
    return schemas.LossResponse(topo_loss=result.value, grad_b64=grad_b64)


def create_app() -> FastAPI:
    app = FastAPI(title="toposeg", version=__version__)

    @app.exception_handler(DataError)
    async def data_error_handler(request: Request, err: DataError):
        body = schemas.ErrorBody(error=err.code, detail=str(err))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, err: ValueError):
        body = schemas.ErrorBody(error="INVALID_ARGUMENT", detail=str(err))
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/betti", response_model=schemas.BettiResponse)
    def betti(req: schemas.BettiRequest) -> schemas.BettiResponse:
        pair = betti_numbers(_decode_mask(req.mask_b64, req.threshold))
        return schemas.BettiResponse(b0=pair.b0, b1=pair.b1)

    @app.post("/diagram", response_model=schemas.DiagramResponse)
    def diagram(req: schemas.DiagramRequest) -> schemas.DiagramResponse:
        diag = compute_persistence(_decode_raster(req.raster_b64))
        dims = tuple(req.dims)
        pairs = [
            schemas.DiagramPair(
                dim=p.dim,
                birth=p.birth,
                death=p.death,
                birth_row=p.birth_pixel.row,
                birth_col=p.birth_pixel.col,
                death_row=None if p.death_pixel is None else p.death_pixel.row,
                death_col=None if p.death_pixel is None else p.death_pixel.col,
                essential=p.essential,
            )
            for p in diag.pairs
            if p.dim in dims
        ]
        return schemas.DiagramResponse(pairs=pairs, csv=diagram_to_csv(diag, dims=dims))

    @app.post("/loss", response_model=schemas.LossResponse, response_model_exclude_none=True)
    def loss(req: schemas.LossRequest) -> schemas.LossResponse:
        return _loss_item(req)

    @app.post(
        "/loss/batch", response_model=schemas.LossBatchResponse, response_model_exclude_none=True
    )
    def loss_batch(req: schemas.LossBatchRequest) -> schemas.LossBatchResponse:
        return schemas.LossBatchResponse(results=[_loss_item(item) for item in req.items])

    @app.post(
        "/metrics", response_model=schemas.MetricsResponse, response_model_exclude_none=True
    )
    def metrics(req: schemas.MetricsRequest) -> schemas.MetricsResponse:
        report = evaluate(
            _decode_raster(req.pred_b64),
            _decode_mask(req.gt_b64),
            spacing=Spacing(req.spacing[0], req.spacing[1]),
            threshold=req.threshold,
        )
        return schemas.MetricsResponse(**report.to_dict())

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        spec = RibbonSpec(**req.model_dump())
        clean, gt, degraded = gen_ribbon(spec)
        return schemas.SynthResponse(
            image_b64=_encode_likelihood(clean, RasterFormat.F32R),
            gt_b64=_encode_likelihood(gt.as_likelihood(), RasterFormat.PGM8),
            degraded_b64=_encode_likelihood(degraded, RasterFormat.F32R),
        )

    @app.post("/patches", response_model=schemas.PatchesResponse)
    def patches(req: schemas.PatchesRequest) -> schemas.PatchesResponse:
        image = _decode_raster(req.image_b64)
        gt = _decode_mask(req.gt_b64)
        patch_set = extract_patches(image, gt, req.stride)
        items = [
            schemas.PatchItem(
                image_b64=_encode_likelihood(p.image, RasterFormat.F32R),
                gt_b64=_encode_likelihood(p.gt.as_likelihood(), RasterFormat.PGM8),
                origin_row=p.origin.row,
                origin_col=p.origin.col,
            )
            for p in patch_set
        ]
        return schemas.PatchesResponse(patches=items)

    @app.post("/augment", response_model=schemas.AugmentResponse)
    def augment_batch(req: schemas.AugmentRequest) -> schemas.AugmentResponse:
        out = []
        for item in req.items:
            image, gt = augment(
                _decode_raster(item.image_b64),
                _decode_mask(item.gt_b64),
                flip_h=item.flip_h,
                flip_v=item.flip_v,
                quarter_turns=item.quarter_turns,
            )
            out.append(
                schemas.RasterPair(
                    image_b64=_encode_likelihood(image, RasterFormat.F32R),
                    gt_b64=_encode_likelihood(gt.as_likelihood(), RasterFormat.PGM8),
                )
            )
        return schemas.AugmentResponse(items=out)

    return app


app = create_app()
