"""Synthetic scene generator: correlated indoor layouts plus a configurable
noise model that fabricates the unary and relative predictions a learned
predictor would supply."""

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from .geometry import frame_transform, normalize, quat_geodesic, yaw_quaternion
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
)


@dataclass(frozen=True)
class NoiseProfile:
    sigma_t_unary: float = 0.4  # meters, per axis
    sigma_s_unary: float = 0.25  # log units, per axis
    rotation_unary_temp: float = 0.3  # softmax temperature over bin geodesics
    rotation_flip_prob: float = 0.1  # chance of re-centering on a random bin
    sigma_t_rel: float = 0.1
    sigma_s_rel: float = 0.08
    direction_kappa: float = 8.0  # direction_prob ~ exp(kappa * cos)
    score_alpha_beta: tuple = (8.0, 2.0)  # Beta params for true-detection scores
    fp_score_alpha_beta: tuple = (2.0, 8.0)  # Beta params for spurious scores
    fp_rate: float = 1.0  # expected spurious detections per scene (detection mode)

    def __post_init__(self):
        for name in ("sigma_t_unary", "sigma_s_unary", "sigma_t_rel", "sigma_s_rel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.direction_kappa <= 0:
            raise ValueError("direction_kappa must be positive")
        object.__setattr__(self, "score_alpha_beta", tuple(self.score_alpha_beta))
        object.__setattr__(self, "fp_score_alpha_beta", tuple(self.fp_score_alpha_beta))

    @staticmethod
    def noiseless():
        return NoiseProfile(sigma_t_unary=0.0, sigma_s_unary=0.0,
                            rotation_unary_temp=0.0, rotation_flip_prob=0.0,
                            sigma_t_rel=0.0, sigma_s_rel=0.0,
                            direction_kappa=math.inf, fp_rate=0.0)

    def to_dict(self):
        d = asdict(self)
        d["score_alpha_beta"] = list(self.score_alpha_beta)
        d["fp_score_alpha_beta"] = list(self.fp_score_alpha_beta)
        d["direction_kappa"] = "inf" if math.isinf(self.direction_kappa) else self.direction_kappa
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        if d.get("direction_kappa") == "inf":
            d["direction_kappa"] = math.inf
        return NoiseProfile(**d)


@dataclass(frozen=True)
class CategorySpec:
    extent_lo: tuple  # per-axis minimum full extent, meters
    extent_hi: tuple
    symmetry_order: int = 1
    shape_kind: str = "box"  # "box" | "ellipsoid"
    weight: float = 1.0  # sampling weight for non-anchor slots

    def __post_init__(self):
        lo = tuple(float(v) for v in self.extent_lo)
        hi = tuple(float(v) for v in self.extent_hi)
        if len(lo) != 3 or len(hi) != 3 or any(a <= 0 or b < a for a, b in zip(lo, hi)):
            raise ValueError("extent ranges must be positive and ordered")
        object.__setattr__(self, "extent_lo", lo)
        object.__setattr__(self, "extent_hi", hi)


@dataclass(frozen=True)
class PlacementRule:
    """Place `category` at a ring distance from an `anchor_category` instance,
    at one of the allowed azimuths in the anchor's frame, optionally facing it."""

    category: str
    anchor_category: str
    dist_lo: float
    dist_hi: float
    azimuths: tuple = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
    azimuth_jitter: float = 0.15  # radians
    face_anchor: bool = True


@dataclass(frozen=True)
class LayoutConfig:
    categories: dict = field(default_factory=dict)  # name -> CategorySpec
    rules: tuple = ()
    objects_per_scene: tuple = (3, 6)
    room_lo: tuple = (-1.8, -1.4, 3.4)
    room_hi: tuple = (1.8, 1.4, 6.5)
    anchor_category: str | None = None  # placed first in every scene
    camera: Camera = field(default_factory=Camera)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.room_lo)
        hi = tuple(float(v) for v in self.room_hi)
        if any(not math.isfinite(v) for v in lo + hi) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("room bounds must be finite and ordered")
        object.__setattr__(self, "room_lo", lo)
        object.__setattr__(self, "room_hi", hi)
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "objects_per_scene",
                           tuple(int(v) for v in self.objects_per_scene))

    def to_dict(self):
        return {
            "categories": {name: asdict(spec) for name, spec in self.categories.items()},
            "rules": [asdict(r) for r in self.rules],
            "objects_per_scene": list(self.objects_per_scene),
            "room_lo": list(self.room_lo),
            "room_hi": list(self.room_hi),
            "anchor_category": self.anchor_category,
            "camera": asdict(self.camera),
        }

    @staticmethod
    def from_dict(d):
        cats = {name: CategorySpec(**spec) for name, spec in d["categories"].items()}
        rules = tuple(PlacementRule(**r) for r in d.get("rules", []))
        return LayoutConfig(
            categories=cats,
            rules=rules,
            objects_per_scene=tuple(d.get("objects_per_scene", (3, 6))),
            room_lo=tuple(d.get("room_lo", (-1.8, -1.3, 3.2))),
            room_hi=tuple(d.get("room_hi", (1.8, 1.3, 6.5))),
            anchor_category=d.get("anchor_category"),
            camera=Camera(**d.get("camera", {})),
        )


def default_layout(objects_per_scene=(3, 6)) -> LayoutConfig:
    """Table/chair/tv layout with chairs placed around tables, facing them."""
    categories = {
        "table": CategorySpec((0.75, 0.75, 0.55), (0.95, 0.95, 0.75),
                              symmetry_order=4, shape_kind="box", weight=0.15),
        "chair": CategorySpec((0.4, 0.4, 0.8), (0.5, 0.5, 1.0),
                              symmetry_order=1, shape_kind="box", weight=0.55),
        "tv": CategorySpec((0.8, 0.12, 0.5), (1.1, 0.2, 0.7),
                           symmetry_order=1, shape_kind="ellipsoid", weight=0.3),
    }
    rules = (PlacementRule("chair", "table", dist_lo=0.85, dist_hi=1.25),)
    return LayoutConfig(categories=categories, rules=rules,
                        objects_per_scene=objects_per_scene,
                        anchor_category="table")


@lru_cache(maxsize=16)
def voxelize_primitive(kind, resolution=32) -> VoxelGrid:
    """Occupancy of a primitive inscribed in the canonical unit cube.

    Cached: scenes share one grid instance per (kind, resolution).
    """
    centers = (np.arange(resolution) + 0.5) / resolution - 0.5
    if kind == "box":
        occ = np.ones((resolution,) * 3)
    elif kind == "ellipsoid":
        x, y, z = np.meshgrid(centers, centers, centers, indexing="ij")
        occ = ((x ** 2 + y ** 2 + z ** 2) <= 0.25).astype(float)
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return VoxelGrid(occ)


def project_box(gt: GroundTruthObject, camera: Camera):
    """Pinhole projection of the oriented cuboid corners, min/max, clipped."""
    pose = gt.pose
    half = pose.extents / 2.0
    R = pose.rotation_matrix()
    us, vs = [], []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                corner = pose.translation + R @ (np.array([sx, sy, sz]) * half)
                if corner[2] <= 1e-9:
                    raise ValueError("unprojectable: corner behind camera")
                us.append(camera.fx * corner[0] / corner[2] + camera.cx)
                vs.append(camera.fy * corner[1] / corner[2] + camera.cy)
    x0 = float(np.clip(min(us), 0, camera.width))
    x1 = float(np.clip(max(us), 0, camera.width))
    y0 = float(np.clip(min(vs), 0, camera.height))
    y1 = float(np.clip(max(vs), 0, camera.height))
    return (x0, y0, x1, y1)


def _footprint_halves(extents, yaw):
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    return (c * extents[0] + s * extents[1]) / 2.0, (s * extents[0] + c * extents[1]) / 2.0


def _overlaps(center, halves, placed):
    for (c2, h2) in placed:
        if (abs(center[0] - c2[0]) < halves[0] + h2[0]
                and abs(center[1] - c2[1]) < halves[1] + h2[1]):
            return True
    return False


def _sample_pose(layout, spec, rng, placed_xy, anchors, rule, max_attempts=200):
    lo, hi = np.array(layout.room_lo), np.array(layout.room_hi)
    extents = rng.uniform(spec.extent_lo, spec.extent_hi)
    if spec.symmetry_order >= 2:
        extents[1] = extents[0]  # symmetric footprint
    for _ in range(max_attempts):
        if rule is not None and anchors:
            ax, ay, az, ayaw = anchors[rng.integers(len(anchors))]
            azimuth = (ayaw + rule.azimuths[rng.integers(len(rule.azimuths))]
                       + rng.normal(0.0, rule.azimuth_jitter))
            dist = rng.uniform(rule.dist_lo, rule.dist_hi)
            x = ax + dist * math.cos(azimuth)
            y = ay + dist * math.sin(azimuth)
            z = float(np.clip(az + rng.uniform(-0.2, 0.2), lo[2], hi[2]))
            if rule.face_anchor:
                yaw = math.atan2(ay - y, ax - x) + rng.normal(0.0, rule.azimuth_jitter)
            else:
                yaw = rng.uniform(0, 2 * math.pi)
        else:
            x, y, z = rng.uniform(lo, hi)
            yaw = rng.uniform(0, 2 * math.pi)
        halves = _footprint_halves(extents, yaw)
        if not (lo[0] <= x - halves[0] and x + halves[0] <= hi[0]
                and lo[1] <= y - halves[1] and y + halves[1] <= hi[1]):
            continue
        if _overlaps((x, y), halves, placed_xy):
            continue
        cam = layout.camera
        if abs(x / z) > cam.cx / cam.fx or abs(y / z) > cam.cy / cam.fy:
            continue  # center outside the frustum
        placed_xy.append(((x, y), halves))
        pose = Pose(np.array([x, y, z]), np.log(extents), yaw_quaternion(yaw))
        return pose, yaw
    raise RuntimeError("layout infeasible")


def _try_sample_objects(layout, rng):
    lo_n, hi_n = layout.objects_per_scene
    n = int(rng.integers(lo_n, hi_n + 1))
    names = list(layout.categories)
    weights = np.array([layout.categories[c].weight for c in names], dtype=float)
    weights = weights / weights.sum()
    cats = []
    if layout.anchor_category is not None and n >= 1:
        cats.append(layout.anchor_category)
    while len(cats) < n:
        cats.append(names[rng.choice(len(names), p=weights)])
    rules = {r.category: r for r in layout.rules}
    placed_xy = []
    anchors = []  # (x, y, z, yaw) of rule-anchor instances
    objects = []
    for i, cat in enumerate(cats):
        spec = layout.categories[cat]
        rule = rules.get(cat)
        if rule is not None and not anchors:
            rule = None
        pose, yaw = _sample_pose(layout, spec, rng, placed_xy, anchors, rule)
        if any(r.anchor_category == cat for r in layout.rules):
            anchors.append((pose.translation[0], pose.translation[1],
                            pose.translation[2], yaw))
        gt = GroundTruthObject(
            object_id=f"o{i}",
            category=cat,
            pose=pose,
            symmetry_order=spec.symmetry_order,
            shape=voxelize_primitive(spec.shape_kind),
            box2d=None,
        )
        objects.append(replace(gt, box2d=project_box(gt, layout.camera)))
    return objects


def sample_scene(layout: LayoutConfig, seed, max_restarts=25) -> SceneInstance:
    """Deterministic ground-truth scene (no predictions) for the given seed.

    Placement is rejection sampled; a scene that cannot be completed is
    resampled from the same stream before giving up."""
    if not layout.categories:
        raise ValueError("layout has no categories")
    rng = np.random.default_rng(seed)
    objects = None
    for _ in range(max_restarts):
        try:
            objects = _try_sample_objects(layout, rng)
            break
        except RuntimeError:
            continue
    if objects is None:
        raise RuntimeError("layout infeasible")
    return SceneInstance(scene_id=f"scene_{seed & 0xFFFFFFFFFFFFFFFF:016x}",
                         camera=layout.camera, gt_objects=tuple(objects))


def _rotation_prob(center_quat, temp, rot_table, flip_prob, rng):
    geo = np.array([quat_geodesic(center_quat, b) for b in rot_table.bins])
    if flip_prob > 0 and rng.random() < flip_prob:
        center = int(rng.integers(len(rot_table)))
        geo = np.array([quat_geodesic(rot_table.bins[center], b) for b in rot_table.bins])
    if temp <= 1e-9:
        prob = np.zeros(len(rot_table))
        prob[int(np.argmin(geo))] = 1.0
        return prob
    logits = -(geo - geo.min()) / temp
    prob = np.exp(logits)
    return prob / prob.sum()


def corrupt_unary(gt: GroundTruthObject, noise: NoiseProfile,
                  rot_table: RotationBinTable, rng) -> UnaryPrediction:
    t = gt.pose.translation + rng.normal(0.0, noise.sigma_t_unary, 3)
    s = gt.pose.log_scale + rng.normal(0.0, noise.sigma_s_unary, 3)
    prob = _rotation_prob(gt.pose.rotation, noise.rotation_unary_temp,
                          rot_table, noise.rotation_flip_prob, rng)
    score = float(rng.beta(*noise.score_alpha_beta))
    return UnaryPrediction(gt.object_id, gt.category, t, s, prob,
                           score=score, shape=gt.shape)


def _direction_prob(v, kappa, dir_table):
    cos = dir_table.bins @ v
    if math.isinf(kappa):
        prob = np.zeros(len(dir_table))
        prob[int(np.argmax(cos))] = 1.0
        return prob
    logits = kappa * (cos - cos.max())
    prob = np.exp(logits)
    return prob / prob.sum()


def corrupt_relative(gt_m: GroundTruthObject, gt_n: GroundTruthObject,
                     noise: NoiseProfile, dir_table: DirectionBinTable,
                     rng) -> RelativePrediction:
    rel_t_true = gt_n.pose.translation - gt_m.pose.translation
    v = frame_transform(gt_m.pose.rotation_matrix(), normalize(rel_t_true))
    rel_t = rel_t_true + rng.normal(0.0, noise.sigma_t_rel, 3)
    rel_s = (gt_n.pose.log_scale - gt_m.pose.log_scale
             + rng.normal(0.0, noise.sigma_s_rel, 3))
    prob = _direction_prob(v, noise.direction_kappa, dir_table)
    return RelativePrediction(gt_m.object_id, gt_n.object_id, rel_t, rel_s, prob)


def splitmix64(x):
    """Deterministic 64-bit mix used to derive per-scene RNG streams."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _spurious_detection(layout, rng, index):
    names = list(layout.categories)
    cat = names[int(rng.integers(len(names)))]
    spec = layout.categories[cat]
    lo, hi = np.array(layout.room_lo), np.array(layout.room_hi)
    pose = Pose(rng.uniform(lo, hi),
                np.log(rng.uniform(spec.extent_lo, spec.extent_hi)),
                yaw_quaternion(rng.uniform(0, 2 * math.pi)))
    return GroundTruthObject(object_id=f"f{index}", category=cat, pose=pose,
                             symmetry_order=spec.symmetry_order,
                             shape=voxelize_primitive(spec.shape_kind))


def populate_predictions(scene: SceneInstance, layout: LayoutConfig,
                         noise: NoiseProfile, rot_table, dir_table,
                         rng, mode="gt_box") -> SceneInstance:
    """Attach fabricated unary and relative predictions to a ground-truth scene."""
    entities = list(scene.gt_objects)
    unary = []
    for gt in scene.gt_objects:
        unary.append(corrupt_unary(gt, noise, rot_table, rng))
    if mode == "detection":
        n_fp = int(rng.poisson(noise.fp_rate))
        for j in range(n_fp):
            phantom = _spurious_detection(layout, rng, j)
            entities.append(phantom)
            fp_noise_scores = noise.fp_score_alpha_beta
            pred = corrupt_unary(phantom, noise, rot_table, rng)
            pred = UnaryPrediction(pred.object_id, pred.category, pred.translation,
                                   pred.log_scale, pred.rotation_prob,
                                   score=float(rng.beta(*fp_noise_scores)),
                                   shape=pred.shape)
            unary.append(pred)
    relative = []
    for m in entities:
        for n in entities:
            if m.object_id != n.object_id:
                relative.append(corrupt_relative(m, n, noise, dir_table, rng))
    return SceneInstance(scene_id=scene.scene_id, camera=scene.camera,
                         gt_objects=scene.gt_objects,
                         unary=tuple(unary), relative=tuple(relative))


def snap_scene_rotations(scene: SceneInstance, rot_table) -> SceneInstance:
    """Replace every ground-truth rotation with its nearest codebook bin, so
    the discrete representation can express the scene exactly."""
    from .binning import quantize_rotation

    objects = []
    for gt in scene.gt_objects:
        b = quantize_rotation(gt.pose.rotation, rot_table)
        pose = Pose(gt.pose.translation, gt.pose.log_scale, rot_table.bins[b])
        snapped = replace(gt, pose=pose)
        objects.append(replace(snapped, box2d=project_box(snapped, scene.camera)))
    return SceneInstance(scene_id=scene.scene_id, camera=scene.camera,
                         gt_objects=tuple(objects))


def generate_scene(layout, noise, rot_table, dir_table, seed, index,
                   mode="gt_box", snap_rotations=False):
    scene_seed = splitmix64((seed + index) & 0xFFFFFFFFFFFFFFFF)
    gt_scene = sample_scene(layout, scene_seed)
    gt_scene = SceneInstance(scene_id=f"scene_{index:05d}", camera=gt_scene.camera,
                             gt_objects=gt_scene.gt_objects)
    if snap_rotations:
        gt_scene = snap_scene_rotations(gt_scene, rot_table)
    noise_rng = np.random.default_rng(splitmix64(scene_seed))
    return populate_predictions(gt_scene, layout, noise, rot_table, dir_table,
                                noise_rng, mode=mode)


def make_dataset(layout: LayoutConfig, noise: NoiseProfile, n_scenes, seed,
                 mode="gt_box", rot_table=None, dir_table=None,
                 snap_rotations=False):
    """Deterministic list of scenes; per-scene streams come from a 64-bit mix
    of (seed + index), so scene i is reproducible in isolation."""
    from .binning import default_direction_codebook, default_rotation_codebook

    rot_table = rot_table or default_rotation_codebook()
    dir_table = dir_table or default_direction_codebook()
    return [generate_scene(layout, noise, rot_table, dir_table, seed, i, mode,
                           snap_rotations=snap_rotations)
            for i in range(n_scenes)]
