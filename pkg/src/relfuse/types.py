"""Domain types: object poses, bin codebooks, predictions, and scenes.

All types are immutable value objects (frozen dataclasses over read-only
numpy arrays) and safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    frame_transform,
    normalize,
    quat_geodesic,
    quat_normalize,
    quat_to_matrix,
)
from .validation import as_simplex, as_vector, check_score


@dataclass(frozen=True)
class Pose:
    """Translation (m), per-axis log extent, and rotation in the camera frame."""

    translation: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray  # unit quaternion (w, x, y, z), camera-from-canonical

    def __post_init__(self):
        object.__setattr__(self, "translation", as_vector(self.translation, 3, "translation"))
        object.__setattr__(self, "log_scale", as_vector(self.log_scale, 3, "log_scale"))
        q = quat_normalize(as_vector(self.rotation, 4, "rotation"))
        q.flags.writeable = False
        object.__setattr__(self, "rotation", q)

    @property
    def extents(self):
        return np.exp(self.log_scale)

    def rotation_matrix(self):
        return quat_to_matrix(self.rotation)


@dataclass(frozen=True)
class RotationBinTable:
    """Ordered codebook of K unit quaternions."""

    bins: np.ndarray  # (K, 4)
    provenance: str = "fixed-grid"

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float)
        if b.ndim != 2 or b.shape[1] != 4 or b.shape[0] < 1:
            raise ValueError("rotation bins must have shape (K, 4)")
        b = np.stack([quat_normalize(q) for q in b])
        for i in range(len(b)):
            for j in range(i + 1, len(b)):
                if quat_geodesic(b[i], b[j]) <= 1e-9:
                    raise ValueError(f"duplicate rotation bins {i} and {j}")
        b.flags.writeable = False
        object.__setattr__(self, "bins", b)

    def __len__(self):
        return self.bins.shape[0]

    def matrices(self):
        return np.stack([quat_to_matrix(q) for q in self.bins])


@dataclass(frozen=True)
class DirectionBinTable:
    """Ordered codebook of K unit 3-vectors."""

    bins: np.ndarray  # (K, 3)
    provenance: str = "fixed-grid"

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float)
        if b.ndim != 2 or b.shape[1] != 3 or b.shape[0] < 1:
            raise ValueError("direction bins must have shape (K, 3)")
        b = np.stack([normalize(v) for v in b])
        for i in range(len(b)):
            for j in range(i + 1, len(b)):
                if np.linalg.norm(b[i] - b[j]) <= 1e-9:
                    raise ValueError(f"duplicate direction bins {i} and {j}")
        b.flags.writeable = False
        object.__setattr__(self, "bins", b)

    def __len__(self):
        return self.bins.shape[0]


@dataclass(frozen=True)
class VoxelGrid:
    """Occupancy over the canonical unit cube; occupied iff value >= 0.5."""

    occupancy: np.ndarray  # (R, R, R) values in [0, 1]

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=float)
        if occ.ndim != 3 or len(set(occ.shape)) != 1:
            raise ValueError("occupancy must be a cubic 3d array")
        if not np.all(np.isfinite(occ)) or occ.min() < 0 or occ.max() > 1:
            raise ValueError("occupancy values must be in [0, 1]")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)

    @property
    def resolution(self):
        return self.occupancy.shape[0]

    def occupied(self):
        return self.occupancy >= 0.5


@dataclass(frozen=True)
class UnaryPrediction:
    """Independent per-object prediction with a detection confidence."""

    object_id: str
    category: str
    translation: np.ndarray
    log_scale: np.ndarray
    rotation_prob: np.ndarray  # simplex over a RotationBinTable
    score: float = 1.0
    shape: VoxelGrid | None = None

    def __post_init__(self):
        object.__setattr__(self, "translation", as_vector(self.translation, 3, "translation"))
        object.__setattr__(self, "log_scale", as_vector(self.log_scale, 3, "log_scale"))
        object.__setattr__(self, "rotation_prob", as_simplex(self.rotation_prob, "rotation_prob"))
        object.__setattr__(self, "score", check_score(self.score))


@dataclass(frozen=True)
class RelativePrediction:
    """Pairwise prediction from `source_id` to `target_id`."""

    source_id: str
    target_id: str
    rel_translation: np.ndarray
    rel_log_scale: np.ndarray
    direction_prob: np.ndarray  # simplex over a DirectionBinTable

    def __post_init__(self):
        if self.source_id == self.target_id:
            raise ValueError("source_id and target_id must differ")
        object.__setattr__(self, "rel_translation", as_vector(self.rel_translation, 3, "rel_translation"))
        object.__setattr__(self, "rel_log_scale", as_vector(self.rel_log_scale, 3, "rel_log_scale"))
        object.__setattr__(self, "direction_prob", as_simplex(self.direction_prob, "direction_prob"))


@dataclass(frozen=True)
class GroundTruthObject:
    object_id: str
    category: str
    pose: Pose
    symmetry_order: int = 1  # yaw symmetry about the up axis
    shape: VoxelGrid | None = None
    box2d: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.symmetry_order not in (1, 2, 4):
            raise ValueError("symmetry_order must be 1, 2, or 4")
        if self.box2d is not None:
            x0, y0, x1, y1 = self.box2d
            if not (x0 <= x1 and y0 <= y1):
                raise ValueError("box2d must be well-ordered (xmin, ymin, xmax, ymax)")
            object.__setattr__(self, "box2d", (float(x0), float(y0), float(x1), float(y1)))


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics, pixel units."""

    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480


@dataclass(frozen=True)
class SceneInstance:
    scene_id: str
    camera: Camera = field(default_factory=Camera)
    gt_objects: tuple = ()
    unary: tuple = ()
    relative: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gt_objects", tuple(self.gt_objects))
        object.__setattr__(self, "unary", tuple(self.unary))
        object.__setattr__(self, "relative", tuple(self.relative))
        gt_ids = [g.object_id for g in self.gt_objects]
        un_ids = [u.object_id for u in self.unary]
        if len(set(gt_ids)) != len(gt_ids):
            raise ValueError("duplicate ground-truth object ids")
        if len(set(un_ids)) != len(un_ids):
            raise ValueError("duplicate unary prediction ids")
        known = set(gt_ids) | set(un_ids)
        pairs = set()
        for r in self.relative:
            if r.source_id not in known or r.target_id not in known:
                raise ValueError(f"relative prediction references unknown id "
                                 f"({r.source_id}, {r.target_id})")
            key = (r.source_id, r.target_id)
            if key in pairs:
                raise ValueError(f"duplicate relative prediction for ordered pair {key}")
            pairs.add(key)

    def gt_by_id(self):
        return {g.object_id: g for g in self.gt_objects}

    def unary_by_id(self):
        return {u.object_id: u for u in self.unary}


def quantize_direction(v, table: DirectionBinTable):
    """Index of the codebook bin with maximal cosine to `v`; ties -> lowest index."""
    v = normalize(v)
    return int(np.argmax(table.bins @ v))


def relative_ground_truth(pose_m: Pose, pose_n: Pose, dir_table: DirectionBinTable,
                          source_id="m", target_id="n") -> RelativePrediction:
    """Exact relative pose from object m to object n.

    Translation and log-scale are plain differences in the camera frame; the
    direction is the unit vector toward n expressed in m's frame, one-hot
    quantized against `dir_table`.
    """
    rel_t = pose_n.translation - pose_m.translation
    rel_s = pose_n.log_scale - pose_m.log_scale
    d = frame_transform(pose_m.rotation_matrix(), normalize(rel_t))
    prob = np.zeros(len(dir_table))
    prob[quantize_direction(d, dir_table)] = 1.0
    return RelativePrediction(source_id, target_id, rel_t, rel_s, prob)


def swap(rel: RelativePrediction, pose_source: Pose, pose_target: Pose,
         dir_table: DirectionBinTable) -> RelativePrediction:
    """The reversed-direction relative: translation/log-scale negate exactly,
    the direction is re-derived in the target object's frame."""
    d = frame_transform(pose_target.rotation_matrix(), normalize(-rel.rel_translation))
    prob = np.zeros(len(dir_table))
    prob[quantize_direction(d, dir_table)] = 1.0
    return RelativePrediction(rel.target_id, rel.source_id,
                              -rel.rel_translation, -rel.rel_log_scale, prob)
