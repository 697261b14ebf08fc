"""relfuse: fuse independent per-object 3D pose estimates with pairwise
relative-pose estimates into globally consistent scene layouts."""

from .binning import (
    build_direction_codebook,
    default_direction_codebook,
    default_rotation_codebook,
    quantize_direction,
    quantize_rotation,
    symmetry_equivalent_bins,
)
from .estimators import CRFRefiner, SceneFuser
from .fusion import (
    FusedScene,
    FusionConfig,
    delta_inconsistency,
    fuse_linear,
    fuse_log_scales,
    fuse_rotations,
    fuse_scene,
    fuse_translations,
    unary_as_fused,
)
from .metrics import EvalReport, Thresholds, detection_ap, scene_error_stats
from .synthgen import (
    LayoutConfig,
    NoiseProfile,
    default_layout,
    make_dataset,
    sample_scene,
)
from .types import (
    Camera,
    DirectionBinTable,
    GroundTruthObject,
    Pose,
    RelativePrediction,
    RotationBinTable,
    SceneInstance,
    UnaryPrediction,
    VoxelGrid,
    relative_ground_truth,
    swap,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
