"""Synthetic ribbon rasters with controlled topology, plus patch extraction
and augmentation.

A ribbon component is a closed curve (ellipse with low-frequency radial
perturbation); the first ``holes`` components are stroked rings (one hole
each), the rest are filled blobs. Components are placed on a shuffled jittered
grid so they never touch. Generation is fully deterministic for a fixed seed
and re-verifies the requested Betti numbers before returning. The degraded
variant erases break gaps that each provably change the topology of the
rendered, binarized raster.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, InfeasibleSpec, ShapeMismatch
from .persistence import BettiPair, betti_numbers
from .rasters import BinaryMask, LikelihoodMap, PixelCoord, binarize

PATCH_SIZE = 64

# radial perturbation amplitude bound; curves stay within r * (1 +/- _AMP)
_AMP = 0.22
_PLACEMENT_ATTEMPTS = 50
_BREAK_ATTEMPTS = 60
_BREAK_ROUNDS = 4


@dataclass(frozen=True)
class RibbonSpec:
    seed: int
    size: int = 96
    components: int = 1
    holes: int = 1
    thickness: int = 3
    break_count: int = 0
    blur_radius: float = 1.0

    def __post_init__(self):
        if self.size < 16:
            raise ValueError(f"size must be >= 16, got {self.size}")
        if self.components < 1:
            raise ValueError(f"components must be positive, got {self.components}")
        if not (0 <= self.holes <= self.components):
            raise ValueError(
                f"holes must lie in [0, components], got {self.holes} for {self.components}"
            )
        if self.thickness < 1:
            raise ValueError(f"thickness must be >= 1, got {self.thickness}")
        if self.break_count < 0:
            raise ValueError(f"break_count must be >= 0, got {self.break_count}")
        if self.blur_radius < 0:
            raise ValueError(f"blur_radius must be >= 0, got {self.blur_radius}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RibbonSpec":
        return cls(**d)


@dataclass(frozen=True)
class Patch:
    image: LikelihoodMap
    gt: BinaryMask
    origin: PixelCoord


@dataclass(frozen=True)
class PatchSet:
    patches: tuple[Patch, ...]

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)


def _min_radius(thickness: int) -> int:
    # inner radius r*(1-_AMP) - thickness/2 must leave room for a hole
    return 2 * thickness + 3


def _render(mask_arr: np.ndarray, blur_radius: float) -> np.ndarray:
    field = mask_arr.astype(np.float64)
    if blur_radius > 0:
        field = ndimage.gaussian_filter(field, sigma=blur_radius)
        peak = field.max()
        if peak > 0:
            field = field / peak
    return field


def _curve_points(rng: np.random.Generator, center, radius: float) -> np.ndarray:
    cy, cx = center
    theta = np.linspace(0.0, 2.0 * math.pi, 720, endpoint=False)
    amps = rng.uniform(-1.0, 1.0, size=3) * np.array([0.12, 0.06, 0.04])
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
    modulation = np.ones_like(theta)
    for k, (a, ph) in enumerate(zip(amps, phases), start=1):
        modulation += a * np.sin(k * theta + ph)
    aspect = rng.uniform(0.75, 1.0)
    r = radius * modulation
    xs = cx + r * np.cos(theta) * aspect
    ys = cy + r * np.sin(theta)
    return np.stack([xs, ys], axis=1).round().astype(np.int32)


def _draw_components(rng: np.random.Generator, spec: RibbonSpec) -> np.ndarray | None:
    size, thickness = spec.size, spec.thickness
    grid = math.ceil(math.sqrt(spec.components))
    cell = size // grid
    r_min = _min_radius(thickness)
    r_cap = ((cell - 2) / 2.0 - thickness / 2.0 - 1.0) / (1.0 + _AMP)
    if r_cap < r_min:
        return None
    cells = [(gy, gx) for gy in range(grid) for gx in range(grid)]
    rng.shuffle(cells)
    mask = np.zeros((size, size), dtype=np.uint8)
    for i in range(spec.components):
        gy, gx = cells[i]
        radius = rng.uniform(r_min, r_cap)
        reach = radius * (1.0 + _AMP) + thickness / 2.0 + 1.0
        lo_y, lo_x = gy * cell + reach, gx * cell + reach
        hi_y, hi_x = (gy + 1) * cell - reach, (gx + 1) * cell - reach
        if hi_y < lo_y or hi_x < lo_x:
            return None
        center = (rng.uniform(lo_y, hi_y), rng.uniform(lo_x, hi_x))
        pts = _curve_points(rng, center, radius)
        if i < spec.holes:
            cv2.polylines(mask, [pts], isClosed=True, color=1, thickness=thickness)
        else:
            cv2.fillPoly(mask, [pts], color=1)
            cv2.polylines(mask, [pts], isClosed=True, color=1, thickness=thickness)
    return mask


def _stamp_gap(mask: np.ndarray, center_idx: int, radius: int) -> np.ndarray:
    out = mask.copy()
    row, col = divmod(int(center_idx), mask.shape[1])
    cv2.circle(out, (col, row), radius, color=0, thickness=-1)
    return out


def _place_breaks(
    rng: np.random.Generator, gt: np.ndarray, spec: RibbonSpec, gt_betti: BettiPair
) -> np.ndarray:
    gap_radius = spec.thickness + 2
    for _ in range(_BREAK_ROUNDS):
        current = gt.copy()
        current_betti = _rendered_betti(current, spec.blur_radius)
        ok = True
        for gap_index in range(spec.break_count):
            last = gap_index == spec.break_count - 1
            placed = False
            for _ in range(_BREAK_ATTEMPTS):
                fg = np.flatnonzero(current)
                if fg.size == 0:
                    break
                candidate = _stamp_gap(current, rng.choice(fg), gap_radius)
                candidate_betti = _rendered_betti(candidate, spec.blur_radius)
                # the net effect must not cancel back to the gt topology
                if candidate_betti != current_betti and not (
                    last and candidate_betti == gt_betti
                ):
                    current, current_betti = candidate, candidate_betti
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok and current_betti != gt_betti:
            return current
    raise InfeasibleSpec(
        f"could not inject {spec.break_count} topology-changing breaks (seed {spec.seed})"
    )


def _rendered_betti(mask_arr: np.ndarray, blur_radius: float) -> BettiPair:
    rendered = _render(mask_arr, blur_radius)
    return betti_numbers(binarize(LikelihoodMap(rendered), 0.5))


def gen_ribbon(spec: RibbonSpec) -> tuple[LikelihoodMap, BinaryMask, LikelihoodMap]:
    """Generate (clean likelihood, ground truth, degraded likelihood) for a
    spec; raises InfeasibleSpec when the requested geometry cannot fit."""
    min_side = 2 * _min_radius(spec.thickness) + spec.thickness + 2
    if spec.components * min_side**2 > spec.size**2 / 2:
        raise InfeasibleSpec(
            f"{spec.components} components of minimal footprint {min_side}^2 "
            f"exceed half of a {spec.size}x{spec.size} raster"
        )
    rng = np.random.default_rng(spec.seed)
    target = BettiPair(spec.components, spec.holes)
    gt_arr = None
    for _ in range(_PLACEMENT_ATTEMPTS):
        candidate = _draw_components(rng, spec)
        if candidate is None:
            continue
        if betti_numbers(BinaryMask(candidate)) == target:
            gt_arr = candidate
            break
    if gt_arr is None:
        raise InfeasibleSpec(
            f"could not place {spec.components} components / {spec.holes} holes "
            f"in a {spec.size}x{spec.size} raster (seed {spec.seed})"
        )
    clean = LikelihoodMap(_render(gt_arr, spec.blur_radius))
    if spec.break_count > 0:
        degraded_arr = _place_breaks(rng, gt_arr, spec, target)
    else:
        degraded_arr = gt_arr
    degraded = LikelihoodMap(_render(degraded_arr, spec.blur_radius))
    return clean, BinaryMask(gt_arr), degraded


def extract_patches(image: LikelihoodMap, gt: BinaryMask, stride: int) -> PatchSet:
    """Slide a 64x64 window (final windows clamped to the edge) and keep
    those whose ground-truth patch has foreground."""
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if image.data.shape != gt.data.shape:
        raise ShapeMismatch(f"image {image.data.shape} vs ground truth {gt.data.shape}")
    height, width = image.data.shape
    if height < PATCH_SIZE or width < PATCH_SIZE:
        raise ImageTooSmall(f"need at least {PATCH_SIZE}x{PATCH_SIZE}, got {height}x{width}")

    def window_starts(extent: int) -> list[int]:
        starts = list(range(0, extent - PATCH_SIZE + 1, stride))
        if starts[-1] != extent - PATCH_SIZE:
            starts.append(extent - PATCH_SIZE)
        return starts

    patches = []
    for r in window_starts(height):
        for c in window_starts(width):
            gt_patch = gt.data[r : r + PATCH_SIZE, c : c + PATCH_SIZE]
            if not gt_patch.any():
                continue
            patches.append(
                Patch(
                    LikelihoodMap(image.data[r : r + PATCH_SIZE, c : c + PATCH_SIZE]),
                    BinaryMask(gt_patch),
                    PixelCoord(r, c),
                )
            )
    return PatchSet(tuple(patches))


def augment(
    image: LikelihoodMap,
    gt: BinaryMask,
    flip_h: bool,
    flip_v: bool,
    quarter_turns: int,
) -> tuple[LikelihoodMap, BinaryMask]:
    """Apply flips then a counterclockwise rotation by quarter_turns * 90
    degrees to both rasters identically. Requires square patches."""
    if image.data.shape != gt.data.shape:
        raise ShapeMismatch(f"image {image.data.shape} vs ground truth {gt.data.shape}")
    if image.height != image.width:
        raise ValueError("augmentation requires square patches")
    if quarter_turns not in (0, 1, 2, 3):
        raise ValueError(f"quarter_turns must be in {{0,1,2,3}}, got {quarter_turns}")

    def apply(arr: np.ndarray) -> np.ndarray:
        if flip_h:
            arr = np.fliplr(arr)
        if flip_v:
            arr = np.flipud(arr)
        return np.rot90(arr, k=quarter_turns).copy()

    return LikelihoodMap(apply(image.data)), BinaryMask(apply(gt.data))


def random_augment(
    image: LikelihoodMap, gt: BinaryMask, rng: np.random.Generator
) -> tuple[LikelihoodMap, BinaryMask]:
    """Seeded random driver: each flip with probability 1/2, rotation
    uniform over the four quarter turns."""
    flip_h = bool(rng.integers(0, 2))
    flip_v = bool(rng.integers(0, 2))
    quarter_turns = int(rng.integers(0, 4))
    return augment(image, gt, flip_h, flip_v, quarter_turns)


# --- dataset manifest -------------------------------------------------------


def manifest_line(
    case_id: str, image_path: str, gt_path: str, degraded_path: str, spec: RibbonSpec
) -> str:
    record = {
        "id": case_id,
        "image_path": image_path,
        "gt_path": gt_path,
        "degraded_path": degraded_path,
        "spec": spec.to_dict(),
    }
    return json.dumps(record)


def read_manifest(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
