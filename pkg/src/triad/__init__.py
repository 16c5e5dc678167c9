"""Multi-view dense depth from optical-flow triangulation.

Per-pixel depth is triangulated from dense flow correspondences and camera
poses, scored with two confidence channels, iteratively refined under a
confidence-weighted least-squares objective with an edge-aware smoothness
prior, and accompanied by a per-pixel Laplacian uncertainty scale. A synthetic
scene generator, a full metric harness, and a CLI pipeline make every stage
testable without datasets.
"""

from .errors import (
    BoundsError,
    ConfigError,
    EmptyEvaluation,
    FormatError,
    InputError,
    NumericalError,
    TriadError,
)
from .flow import FlowField
from .geometry import (
    Intrinsics,
    Ray,
    RelativePose,
    Trajectory,
    compose,
    identity_pose,
    inverse,
    normalized_grid,
    pixel_to_normalized,
    relative_angle_translation,
)
from .metrics import (
    CorrelationResult,
    MetricReport,
    SweepRow,
    error_uncertainty_correlation,
    evaluate,
    uncertainty_sweep,
)
from .refine import RefineConfig, RefineResult, WeightMaps, build_weights, laplacian_nll, refine
from .select import Selection, SelectionPolicy, select_frames
from .synth import NoiseModel, SyntheticScene, corrupt_flow, make_scene, make_trajectory, render_flow
from .triangulate import (
    InitialDepth,
    TriangulationInput,
    epipolar_loss,
    triangulate_map,
    triangulate_pixel,
)

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "ConfigError",
    "CorrelationResult",
    "EmptyEvaluation",
    "FlowField",
    "FormatError",
    "InitialDepth",
    "InputError",
    "Intrinsics",
    "MetricReport",
    "NoiseModel",
    "NumericalError",
    "Ray",
    "RefineConfig",
    "RefineResult",
    "RelativePose",
    "Selection",
    "SelectionPolicy",
    "SweepRow",
    "SyntheticScene",
    "Trajectory",
    "TriadError",
    "TriangulationInput",
    "WeightMaps",
    "build_weights",
    "compose",
    "corrupt_flow",
    "epipolar_loss",
    "error_uncertainty_correlation",
    "evaluate",
    "identity_pose",
    "inverse",
    "laplacian_nll",
    "make_scene",
    "make_trajectory",
    "normalized_grid",
    "pixel_to_normalized",
    "refine",
    "relative_angle_translation",
    "render_flow",
    "select_frames",
    "triangulate_map",
    "triangulate_pixel",
    "uncertainty_sweep",
]
