"""Topology-aware segmentation toolkit.

Core pieces: likelihood/mask raster types with two on-disk formats,
superlevel-set cubical persistence with critical pixels, a differentiable
topological loss via optimal diagram matching, segmentation quality metrics,
and a seeded synthetic ribbon generator. A CLI and an HTTP service expose
everything to other processes.
"""

__version__ = "0.1.0"

from .errors import (
    DataError,
    EmptyMask,
    ImageTooSmall,
    InfeasibleSpec,
    InvalidConfig,
    LengthMismatch,
    MalformedHeader,
    OutOfRange,
    ShapeMismatch,
    TruncatedPayload,
)
from .loss import DiagramMatching, DimMatching, TopoLossResult, gt_diagram, match_diagrams, topo_loss
from .metrics import MetricsReport, betti0_error, dice, evaluate, surface_distances
from .persistence import (
    BettiPair,
    PersistenceDiagram,
    PersistencePair,
    betti_curve,
    betti_numbers,
    compute_persistence,
    diagram_to_csv,
    pairs_from_csv,
)
from .rasters import (
    BinaryMask,
    LikelihoodMap,
    PixelCoord,
    RasterFormat,
    Spacing,
    binarize,
    detect_format,
    load_raster,
    read_raster,
    save_raster,
    signed_f32r_array,
    signed_f32r_bytes,
    write_raster,
)
from .synth import (
    Patch,
    PatchSet,
    RibbonSpec,
    augment,
    extract_patches,
    gen_ribbon,
    random_augment,
)

__all__ = [
    "DataError",
    "EmptyMask",
    "ImageTooSmall",
    "InfeasibleSpec",
    "InvalidConfig",
    "LengthMismatch",
    "MalformedHeader",
    "OutOfRange",
    "ShapeMismatch",
    "TruncatedPayload",
    "DiagramMatching",
    "DimMatching",
    "TopoLossResult",
    "gt_diagram",
    "match_diagrams",
    "topo_loss",
    "MetricsReport",
    "betti0_error",
    "dice",
    "evaluate",
    "surface_distances",
    "BettiPair",
    "PersistenceDiagram",
    "PersistencePair",
    "betti_curve",
    "betti_numbers",
    "compute_persistence",
    "diagram_to_csv",
    "pairs_from_csv",
    "BinaryMask",
    "LikelihoodMap",
    "PixelCoord",
    "RasterFormat",
    "Spacing",
    "binarize",
    "detect_format",
    "load_raster",
    "read_raster",
    "save_raster",
    "signed_f32r_array",
    "signed_f32r_bytes",
    "write_raster",
    "Patch",
    "PatchSet",
    "RibbonSpec",
    "augment",
    "extract_patches",
    "gen_ribbon",
    "random_augment",
]
