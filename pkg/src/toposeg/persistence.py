"""Persistent homology of 2D rasters under superlevel-set filtration.

The filtration sweeps the threshold t from 1 down to 0 over the sets
{p : f(p) >= t}. Foreground uses 8-connectivity and background (holes)
4-connectivity, the standard digital-topology pairing.

Dimension 0 is computed by a union-find sweep over pixels in decreasing
value order: a component is born at its peak pixel and dies at the saddle
pixel that merges it into an older component. Exactly one class per map is
essential (the global component); it is assigned death 0 and no death pixel.

Dimension 1 uses the dual sweep: background components of {f < t} are
tracked with a union-find over the 4-connected complement processed in
increasing value order, with a virtual "outside" node joined to every border
pixel. A merge at saddle pixel s kills the younger basin b, which in the
superlevel direction reads as a hole born at f(s) and dying at f(b). Every
hole dies by t = 0, so dimension 1 has no essential classes.

Tie-breaking among equal pixel values is by row-major index, ascending in
the decreasing-value sweep; critical pixels are therefore deterministic on
plateaus. Zero-persistence pairs are discarded.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .rasters import BinaryMask, LikelihoodMap, PixelCoord, binarize

_EIGHT = np.ones((3, 3), dtype=int)


class BettiPair(NamedTuple):
    b0: int
    b1: int


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth: float
    death: float
    birth_pixel: PixelCoord
    death_pixel: PixelCoord | None
    essential: bool = False

    @property
    def persistence(self) -> float:
        return self.birth - self.death


@dataclass(frozen=True)
class PersistenceDiagram:
    pairs: tuple[PersistencePair, ...]
    source_height: int
    source_width: int

    def pairs_in_dim(self, dim: int) -> tuple[PersistencePair, ...]:
        return tuple(p for p in self.pairs if p.dim == dim)

    def betti_at(self, threshold: float) -> BettiPair:
        """Count classes alive at a threshold: non-essential pairs with
        death < t <= birth plus essential pairs with birth >= t."""
        counts = [0, 0]
        for p in self.pairs:
            if p.essential:
                if p.birth >= threshold:
                    counts[p.dim] += 1
            elif p.death < threshold <= p.birth:
                counts[p.dim] += 1
        return BettiPair(*counts)


def betti_numbers(mask: BinaryMask) -> BettiPair:
    """Betti numbers of a mask: 8-connected foreground components and
    bounded 4-connected background components (holes)."""
    fg = mask.data.astype(bool)
    _, b0 = ndimage.label(fg, structure=_EIGHT)
    bg_labels, n_bg = ndimage.label(~fg)  # default structure is 4-connected
    if n_bg == 0:
        return BettiPair(int(b0), 0)
    border = np.concatenate(
        [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
    )
    open_components = np.setdiff1d(np.unique(border), [0]).size
    return BettiPair(int(b0), int(n_bg - open_components))


def betti_curve(lmap: LikelihoodMap, thresholds: Sequence[float]) -> list[BettiPair]:
    """Betti numbers of the binarized map at each threshold."""
    return [betti_numbers(binarize(lmap, float(t))) for t in thresholds]


def _sort_key(pair: PersistencePair, width: int):
    return (
        pair.dim,
        -(pair.birth - pair.death),
        pair.birth,
        pair.birth_pixel.row * width + pair.birth_pixel.col,
    )


def compute_persistence(lmap: LikelihoodMap) -> PersistenceDiagram:
    """All positive-persistence classes (dims 0 and 1) of the superlevel
    filtration, with critical pixels."""
    height, width = lmap.data.shape
    n = height * width
    flat = lmap.values
    # descending by value, ties by row-major index ascending
    order = np.argsort(-flat, kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    pairs: list[PersistencePair] = []
    coord = lambda idx: PixelCoord(int(idx) // width, int(idx) % width)

    # --- dim 0: union-find over 8-connected foreground, high to low --------
    parent = np.full(n, -1, dtype=np.int64)
    peak = np.empty(n, dtype=np.int64)  # root -> index of the component's peak

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for p in order:
        p = int(p)
        parent[p] = p
        peak[p] = p
        row, col = p // width, p % width
        for dr in (-1, 0, 1):
            r2 = row + dr
            if r2 < 0 or r2 >= height:
                continue
            base = r2 * width
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                c2 = col + dc
                if c2 < 0 or c2 >= width:
                    continue
                q = base + c2
                if parent[q] < 0:
                    continue
                rp, rq = find(p), find(q)
                if rp == rq:
                    continue
                if rank[peak[rp]] < rank[peak[rq]]:
                    elder, younger = rp, rq
                else:
                    elder, younger = rq, rp
                birth_idx = int(peak[younger])
                birth, death = float(flat[birth_idx]), float(flat[p])
                if birth > death:
                    pairs.append(
                        PersistencePair(0, birth, death, coord(birth_idx), coord(p))
                    )
                parent[younger] = elder

    global_root = find(int(order[0]))
    global_birth_idx = int(peak[global_root])
    global_birth = float(flat[global_birth_idx])
    if global_birth > 0.0:
        pairs.append(
            PersistencePair(0, global_birth, 0.0, coord(global_birth_idx), None, essential=True)
        )

    # --- dim 1: dual union-find over the 4-connected complement, low to high
    outside = n
    parent1 = np.full(n + 1, -1, dtype=np.int64)
    parent1[outside] = outside
    basin = np.empty(n + 1, dtype=np.int64)  # root -> index of the basin minimum
    basin[outside] = -1

    def find1(x: int) -> int:
        root = x
        while parent1[root] != root:
            root = parent1[root]
        while parent1[x] != root:
            parent1[x], x = root, parent1[x]
        return root

    def dual_rank(root: int) -> int:
        # position in the ascending sweep; the outside node precedes everything
        if basin[root] < 0:
            return -1
        return n - 1 - int(rank[basin[root]])

    for p in order[::-1]:
        p = int(p)
        parent1[p] = p
        basin[p] = p
        row, col = p // width, p % width
        neighbors = []
        if row > 0:
            neighbors.append(p - width)
        else:
            neighbors.append(outside)
        if row < height - 1:
            neighbors.append(p + width)
        else:
            neighbors.append(outside)
        if col > 0:
            neighbors.append(p - 1)
        else:
            neighbors.append(outside)
        if col < width - 1:
            neighbors.append(p + 1)
        else:
            neighbors.append(outside)
        for q in neighbors:
            if parent1[q] < 0:
                continue
            rp, rq = find1(p), find1(q)
            if rp == rq:
                continue
            if dual_rank(rp) < dual_rank(rq):
                elder, younger = rp, rq
            else:
                elder, younger = rq, rp
            death_idx = int(basin[younger])
            birth, death = float(flat[p]), float(flat[death_idx])
            if birth > death:
                pairs.append(PersistencePair(1, birth, death, coord(p), coord(death_idx)))
            parent1[younger] = elder

    pairs.sort(key=lambda pr: _sort_key(pr, width))
    return PersistenceDiagram(tuple(pairs), height, width)


# --- diagram CSV ------------------------------------------------------------

CSV_HEADER = "dim,birth,death,birth_row,birth_col,death_row,death_col"


def _fmt(x: float) -> str:
    return format(x, ".9g")


def diagram_to_csv(diagram: PersistenceDiagram, dims: Iterable[int] = (0, 1)) -> str:
    """Serialize selected dimensions; essential classes leave the death
    pixel fields empty."""
    wanted = set(dims)
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for p in diagram.pairs:
        if p.dim not in wanted:
            continue
        if p.death_pixel is None:
            tail = ","
        else:
            tail = f"{p.death_pixel.row},{p.death_pixel.col}"
        out.write(
            f"{p.dim},{_fmt(p.birth)},{_fmt(p.death)},"
            f"{p.birth_pixel.row},{p.birth_pixel.col},{tail}\n"
        )
    return out.getvalue()


def pairs_from_csv(text: str) -> tuple[PersistencePair, ...]:
    lines = text.strip().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized diagram CSV header")
    pairs = []
    for line in lines[1:]:
        fields = line.split(",")
        if len(fields) != 7:
            raise ValueError(f"expected 7 CSV fields, got {len(fields)}")
        dim, birth, death = int(fields[0]), float(fields[1]), float(fields[2])
        birth_pixel = PixelCoord(int(fields[3]), int(fields[4]))
        if fields[5] == "" and fields[6] == "":
            pairs.append(PersistencePair(dim, birth, death, birth_pixel, None, essential=True))
        else:
            death_pixel = PixelCoord(int(fields[5]), int(fields[6]))
            pairs.append(PersistencePair(dim, birth, death, birth_pixel, death_pixel))
    return tuple(pairs)
