"""Topological loss: diagram matching against the ground truth and the exact
per-pixel gradient through critical pixels.

Matching minimizes, per homology dimension, the total squared distance
between matched (birth, death) points, where any point may instead pay the
squared distance to its diagonal projection, (birth - death)^2 / 2. The
optimum is found by optimal assignment on the diagonally augmented cost
matrix. Gradients flow only to the critical pixels of predicted pairs:
2*(b_p - b_g) / 2*(d_p - d_g) for ground-truth matches, (b - d) / (d - b)
for diagonal matches. The loss is nondifferentiable at value ties; gradients
there follow the canonical critical pixel chosen by the tie-break order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeMismatch
from .persistence import PersistenceDiagram, PersistencePair, compute_persistence
from .rasters import BinaryMask, LikelihoodMap

# Sentinel index for "matched to the diagonal" in assignment tuples.
DIAGONAL = None

# Any real matching cost is at most 2 per point; this keeps the augmented
# matrix finite while never being selected.
_FORBIDDEN = 1.0e6


def pair_cost(p: PersistencePair, g: PersistencePair) -> float:
    return (p.birth - g.birth) ** 2 + (p.death - g.death) ** 2


def diagonal_cost(p: PersistencePair) -> float:
    return (p.birth - p.death) ** 2 / 2.0


@dataclass(frozen=True)
class DimMatching:
    dim: int
    assignments: tuple[tuple[int | None, int | None], ...]
    cost: float


@dataclass(frozen=True)
class DiagramMatching:
    by_dim: tuple[DimMatching, ...]
    total_cost: float

    def for_dim(self, dim: int) -> DimMatching:
        for m in self.by_dim:
            if m.dim == dim:
                return m
        raise KeyError(dim)


@dataclass(frozen=True)
class TopoLossResult:
    value: float
    grad: np.ndarray
    matching: DiagramMatching


def gt_diagram(gt: BinaryMask) -> PersistenceDiagram:
    """Diagram of a binary mask viewed as a likelihood: beta0 dim-0 points
    and beta1 dim-1 points, all at (1, 0)."""
    return compute_persistence(gt.as_likelihood())


def _match_dim(
    pred_pairs: tuple[PersistencePair, ...], gt_pairs: tuple[PersistencePair, ...], dim: int
) -> DimMatching:
    n, m = len(pred_pairs), len(gt_pairs)
    if n == 0 and m == 0:
        return DimMatching(dim, (), 0.0)
    cost = np.full((n + m, m + n), _FORBIDDEN, dtype=np.float64)
    for i, p in enumerate(pred_pairs):
        for j, g in enumerate(gt_pairs):
            cost[i, j] = pair_cost(p, g)
        cost[i, m + i] = diagonal_cost(p)
    for j, g in enumerate(gt_pairs):
        cost[n + j, j] = diagonal_cost(g)
    cost[n:, m:] = 0.0
    rows, cols = linear_sum_assignment(cost)

    assignments = []
    total = 0.0
    for r, c in zip(rows, cols):
        if r < n and c < m:
            assignments.append((int(r), int(c)))
            total += pair_cost(pred_pairs[r], gt_pairs[c])
        elif r < n:
            assert c == m + r, "predicted pair may only take its own diagonal slot"
            assignments.append((int(r), DIAGONAL))
            total += diagonal_cost(pred_pairs[r])
        elif c < m:
            assert r == n + c, "ground-truth pair may only take its own diagonal slot"
            assignments.append((DIAGONAL, int(c)))
            total += diagonal_cost(gt_pairs[c])
    return DimMatching(dim, tuple(assignments), total)


def match_diagrams(pred: PersistenceDiagram, gt: PersistenceDiagram) -> DiagramMatching:
    """Optimal one-to-one matching per dimension, diagonal matches allowed.

    Assignment indices refer to positions within ``pairs_in_dim`` of each
    diagram (deterministic diagram order).
    """
    by_dim = tuple(
        _match_dim(pred.pairs_in_dim(d), gt.pairs_in_dim(d), d) for d in (0, 1)
    )
    return DiagramMatching(by_dim, sum(m.cost for m in by_dim))


def topo_loss(
    pred: LikelihoodMap,
    gt: BinaryMask,
    dims: tuple[int, ...] = (0, 1),
    weight: float = 1.0,
) -> TopoLossResult:
    """Loss value and per-pixel gradient for a prediction against a binary
    ground truth, over the selected homology dimensions."""
    if pred.data.shape != gt.data.shape:
        raise ShapeMismatch(
            f"prediction {pred.data.shape} vs ground truth {gt.data.shape}"
        )
    if weight < 0:
        raise ValueError(f"weight must be non-negative, got {weight}")
    dims = tuple(sorted(set(dims)))
    if any(d not in (0, 1) for d in dims):
        raise ValueError(f"dims must be a subset of {{0, 1}}, got {dims}")

    pred_diagram = compute_persistence(pred)
    gt_diag = gt_diagram(gt)

    by_dim = []
    grad = np.zeros(pred.data.shape, dtype=np.float64)
    for d in dims:
        pred_pairs = pred_diagram.pairs_in_dim(d)
        gt_pairs = gt_diag.pairs_in_dim(d)
        matching = _match_dim(pred_pairs, gt_pairs, d)
        by_dim.append(matching)
        for pi, gi in matching.assignments:
            if pi is DIAGONAL:
                continue
            p = pred_pairs[pi]
            if gi is DIAGONAL:
                g_birth = p.birth - p.death
                g_death = p.death - p.birth
            else:
                g = gt_pairs[gi]
                g_birth = 2.0 * (p.birth - g.birth)
                g_death = 2.0 * (p.death - g.death)
            grad[p.birth_pixel.row, p.birth_pixel.col] += weight * g_birth
            if p.death_pixel is not None:
                grad[p.death_pixel.row, p.death_pixel.col] += weight * g_death

    matching = DiagramMatching(tuple(by_dim), sum(m.cost for m in by_dim))
    return TopoLossResult(weight * matching.total_cost, grad, matching)


def topo_loss_value(
    pred: LikelihoodMap,
    gt_diag: PersistenceDiagram,
    dims: tuple[int, ...] = (0, 1),
    weight: float = 1.0,
) -> float:
    """Value-only path against a precomputed ground-truth diagram (used by
    finite-difference probes, where the gradient raster is wasted work)."""
    pred_diagram = compute_persistence(pred)
    total = 0.0
    for d in dims:
        total += _match_dim(pred_diagram.pairs_in_dim(d), gt_diag.pairs_in_dim(d), d).cost
    return weight * total
