"""Segmentation evaluation: Dice overlap, symmetric surface distances
(ASD, HD95) and the connected-component (Betti-0) error.

Boundary pixels are foreground pixels with at least one 4-neighbor in the
background, the image border counting as background. ASD and HD95 are taken
over the pooled symmetric multiset of boundary-to-boundary distances; HD95
uses the 95th percentile with linear interpolation between order statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, LengthMismatch, ShapeMismatch
from .persistence import betti_numbers
from .rasters import BinaryMask, LikelihoodMap, Spacing, binarize


@dataclass(frozen=True)
class MetricsReport:
    dsc: float
    betti0_error: float
    asd_mm: float | None = None
    hd95_mm: float | None = None

    def to_dict(self) -> dict:
        out = {"dsc": self.dsc}
        if self.asd_mm is not None:
            out["asd_mm"] = self.asd_mm
        if self.hd95_mm is not None:
            out["hd95_mm"] = self.hd95_mm
        out["betti0_error"] = self.betti0_error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_shapes(a: BinaryMask, b: BinaryMask) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.data.shape} vs {b.data.shape}")


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    _check_shapes(a, b)
    fa, fb = a.data.astype(bool), b.data.astype(bool)
    sa, sb = int(fa.sum()), int(fb.sum())
    if sa + sb == 0:
        return 1.0
    return 2.0 * int((fa & fb).sum()) / (sa + sb)


def boundary_pixels(mask: BinaryMask) -> np.ndarray:
    """Boolean raster of foreground pixels with a background 4-neighbor
    (out-of-image counts as background)."""
    fg = mask.data.astype(bool)
    padded = np.pad(fg, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return fg & ~interior


def surface_distances(
    a: BinaryMask, b: BinaryMask, spacing: Spacing = Spacing()
) -> tuple[float, float]:
    """(ASD, HD95) in millimeters over the pooled symmetric boundary
    distance multiset."""
    _check_shapes(a, b)
    if not a.data.any():
        raise EmptyMask("first mask has no foreground")
    if not b.data.any():
        raise EmptyMask("second mask has no foreground")
    ba, bb = boundary_pixels(a), boundary_pixels(b)
    sampling = (spacing.dy, spacing.dx)
    dist_to_b = ndimage.distance_transform_edt(~bb, sampling=sampling)
    dist_to_a = ndimage.distance_transform_edt(~ba, sampling=sampling)
    pooled = np.concatenate([dist_to_b[ba], dist_to_a[bb]])
    return float(pooled.mean()), float(np.percentile(pooled, 95))


def betti0_error(pred_masks, gt_masks) -> float:
    """Mean absolute difference in connected-component counts over pairs."""
    pred_masks, gt_masks = list(pred_masks), list(gt_masks)
    if len(pred_masks) != len(gt_masks):
        raise LengthMismatch(f"{len(pred_masks)} predictions vs {len(gt_masks)} ground truths")
    if not pred_masks:
        raise LengthMismatch("no mask pairs given")
    total = 0
    for p, g in zip(pred_masks, gt_masks):
        _check_shapes(p, g)
        total += abs(betti_numbers(p).b0 - betti_numbers(g).b0)
    return total / len(pred_masks)


def evaluate(
    pred: LikelihoodMap,
    gt: BinaryMask,
    spacing: Spacing = Spacing(),
    threshold: float = 0.5,
) -> MetricsReport:
    """Binarize the prediction and compute the full report; surface
    distances are omitted (not fabricated) when either mask is empty."""
    if pred.data.shape != gt.data.shape:
        raise ShapeMismatch(f"prediction {pred.data.shape} vs ground truth {gt.data.shape}")
    pred_mask = binarize(pred, threshold)
    dsc = dice(pred_mask, gt)
    b_err = betti0_error([pred_mask], [gt])
    try:
        asd, hd95 = surface_distances(pred_mask, gt, spacing)
    except EmptyMask:
        return MetricsReport(dsc=dsc, betti0_error=b_err)
    return MetricsReport(dsc=dsc, betti0_error=b_err, asd_mm=asd, hd95_mm=hd95)
