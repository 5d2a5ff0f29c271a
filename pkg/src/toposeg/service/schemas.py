"""Request/response bodies for the HTTP service.

Rasters travel as base64-encoded bytes in either documented on-disk format
(binary PGM or the little-endian float32 "F32R" layout); the service detects
which by the leading magic. Signed gradient rasters always come back in the
float32 layout.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class BettiRequest(BaseModel):
    mask_b64: str
    threshold: float = 0.5


class BettiResponse(BaseModel):
    b0: int
    b1: int


class DiagramRequest(BaseModel):
    raster_b64: str
    dims: list[int] = Field(default_factory=lambda: [0, 1])


class DiagramPair(BaseModel):
    dim: int
    birth: float
    death: float
    birth_row: int
    birth_col: int
    death_row: int | None
    death_col: int | None
    essential: bool


class DiagramResponse(BaseModel):
    pairs: list[DiagramPair]
    csv: str


class LossRequest(BaseModel):
    pred_b64: str
    gt_b64: str
    dims: list[int] = Field(default_factory=lambda: [0, 1])
    weight: float = 1.0
    want_grad: bool = False


class LossResponse(BaseModel):
    topo_loss: float
    grad_b64: str | None = None


class LossBatchRequest(BaseModel):
    items: list[LossRequest]


class LossBatchResponse(BaseModel):
    results: list[LossResponse]


class MetricsRequest(BaseModel):
    pred_b64: str
    gt_b64: str
    threshold: float = 0.5
    spacing: tuple[float, float] = (1.0, 1.0)


class MetricsResponse(BaseModel):
    dsc: float
    asd_mm: float | None = None
    hd95_mm: float | None = None
    betti0_error: float


class SynthRequest(BaseModel):
    seed: int
    size: int = 96
    components: int = 1
    holes: int = 1
    thickness: int = 3
    break_count: int = 0
    blur_radius: float = 1.0


class SynthResponse(BaseModel):
    image_b64: str
    gt_b64: str
    degraded_b64: str


class PatchesRequest(BaseModel):
    image_b64: str
    gt_b64: str
    stride: int = 32


class PatchItem(BaseModel):
    image_b64: str
    gt_b64: str
    origin_row: int
    origin_col: int


class PatchesResponse(BaseModel):
    patches: list[PatchItem]


class AugmentItem(BaseModel):
    image_b64: str
    gt_b64: str
    flip_h: bool = False
    flip_v: bool = False
    quarter_turns: int = Field(0, ge=0, le=3)


class RasterPair(BaseModel):
    image_b64: str
    gt_b64: str


class AugmentRequest(BaseModel):
    items: list[AugmentItem]


class AugmentResponse(BaseModel):
    items: list[RasterPair]


class ErrorBody(BaseModel):
    error: str
    detail: str
