"""Incremental separation of point sets by hyperplanes, with quadrant-code retrieval."""

from hypersep.engine import (
    InsertOutcome,
    Outcome,
    PendingPair,
    SeparationConfig,
    SeparationState,
    separate,
)
from hypersep.errors import (
    BootstrapFailed,
    DegenerateGeometry,
    DimensionError,
    HypersepError,
    IncidenceError,
    InconsistentSystem,
    RankDeficient,
    StateError,
)
from hypersep.geometry import TAU, Hyperplane, OrientationVector, Point, compute_ov, evaluate_side
from hypersep.oracle import audit_bits, quadrant_census, verify_all_separated
from hypersep.retrieval import QuadrantCode, Record, RetrievalIndex, build_index, code_of

__version__ = "0.1.0"

__all__ = [
    "BootstrapFailed", "DegenerateGeometry", "DimensionError", "HypersepError", "IncidenceError",
    "InconsistentSystem", "RankDeficient", "StateError",
    "Hyperplane", "InsertOutcome", "OrientationVector", "Outcome", "PendingPair", "Point", "QuadrantCode",
    "Record", "RetrievalIndex", "SeparationConfig", "SeparationState", "TAU",
    "audit_bits", "build_index", "code_of", "compute_ov", "evaluate_side", "quadrant_census", "separate",
    "verify_all_separated", "worked_example_path",
]


def worked_example_path():
    """Path of the bundled 29-point 2-D dataset (three classes a, b, c)."""
    from importlib.resources import files
    return files("hypersep") / "data" / "worked_example_29.csv"
