"""Evaluation metrics: per-component errors, thresholded true positives,
detection average precision with PR curves, and aggregate error statistics."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import quat_geodesic, quat_multiply, yaw_quaternion
from .types import VoxelGrid

ALL_CRITERIA = ("box2d", "trans", "rot", "scale", "shape")


@dataclass(frozen=True)
class Thresholds:
    delta_t: float = 0.5  # meters
    delta_s: float = 0.2  # log2 units
    delta_q: float = 30.0  # degrees
    delta_v: float = 0.25  # voxel IoU (>= is a hit)
    delta_b: float = 0.5  # box IoU (>= is a hit)

    def __post_init__(self):
        for name in ("delta_t", "delta_s", "delta_q", "delta_v", "delta_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PredictedObject:
    """Flat record evaluated against ground truth (fused, unary, or CRF output)."""

    scene_id: str
    object_id: str
    category: str
    translation: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray  # unit quaternion
    score: float = 1.0
    box2d: tuple | None = None
    shape: VoxelGrid | None = None


def translation_error(t_pred, t_gt):
    return float(np.linalg.norm(np.asarray(t_pred, float) - np.asarray(t_gt, float)))


def scale_error(extents_pred, extents_gt):
    """Mean absolute per-axis difference of log2 extents."""
    p = np.asarray(extents_pred, dtype=float)
    g = np.asarray(extents_gt, dtype=float)
    if np.any(p <= 0) or np.any(g <= 0):
        raise ValueError("extents must be strictly positive")
    return float(np.mean(np.abs(np.log2(p) - np.log2(g))))


def rotation_error(q_pred, q_gt, symmetry_order=1):
    """Geodesic distance in degrees, minimized over the yaw symmetry group."""
    best = np.inf
    for k in range(symmetry_order):
        g = yaw_quaternion(2.0 * np.pi * k / symmetry_order)
        best = min(best, quat_geodesic(q_pred, quat_multiply(q_gt, g)))
    return float(np.rad2deg(best))


def voxel_iou(pred: VoxelGrid, gt: VoxelGrid):
    if pred.resolution != gt.resolution:
        raise ValueError("voxel grid resolution mismatch")
    a = pred.occupied()
    b = gt.occupied()
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def box2d_iou(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0:
        return 0.0
    return inter / union


def is_true_positive(pred: PredictedObject, gt, thresholds: Thresholds, criteria):
    """Conjunction of the selected per-component threshold tests."""
    criteria = set(criteria)
    unknown = criteria - set(ALL_CRITERIA)
    if unknown:
        raise ValueError(f"unknown criteria {sorted(unknown)}")
    if "box2d" in criteria:
        if pred.box2d is None or gt.box2d is None:
            raise ValueError("box2d criterion requested but boxes absent")
        if box2d_iou(pred.box2d, gt.box2d) < thresholds.delta_b:
            return False
    if "trans" in criteria:
        if translation_error(pred.translation, gt.pose.translation) > thresholds.delta_t:
            return False
    if "rot" in criteria:
        if rotation_error(pred.rotation, gt.pose.rotation, gt.symmetry_order) > thresholds.delta_q:
            return False
    if "scale" in criteria:
        if scale_error(np.exp(pred.log_scale), gt.pose.extents) > thresholds.delta_s:
            return False
    if "shape" in criteria:
        if pred.shape is None or gt.shape is None:
            raise ValueError("shape criterion requested but voxels absent")
        if voxel_iou(pred.shape, gt.shape) < thresholds.delta_v:
            return False
    return True


def detection_ap(predictions, gts_by_scene, thresholds: Thresholds, criteria):
    """Average precision with greedy score-ordered matching.

    Predictions are sorted by descending score (ties by object id); each one
    matches the first still-unmatched ground-truth object in its scene that
    satisfies every selected criterion. AP is the area under the all-points
    interpolated precision envelope.
    """
    n_gt = sum(len(v) for v in gts_by_scene.values())
    if n_gt == 0:
        raise ValueError("empty ground truth")
    order = sorted(predictions, key=lambda p: (-p.score, p.scene_id, p.object_id))
    matched = {scene: [False] * len(objs) for scene, objs in gts_by_scene.items()}
    tp_flags = []
    for pred in order:
        hit = False
        for j, gt in enumerate(gts_by_scene.get(pred.scene_id, [])):
            if matched[pred.scene_id][j]:
                continue
            if is_true_positive(pred, gt, thresholds, criteria):
                matched[pred.scene_id][j] = True
                hit = True
                break
        tp_flags.append(hit)
    tp = np.cumsum(tp_flags)
    fp = np.cumsum([not f for f in tp_flags])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    pr_points = [(float(r), float(p), float(pred.score))
                 for r, p, pred in zip(recall, precision, order)]
    # all-points interpolation: precision envelope, integrated over recall
    r = np.concatenate([[0.0], recall, [recall[-1] if len(recall) else 0.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(p) - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    ap = float(np.sum((r[1:] - r[:-1]) * p[1:]))
    return ap, pr_points


@dataclass(frozen=True)
class ComponentStats:
    median: float
    mean: float
    pct_within: float  # percent of samples within the threshold


@dataclass(frozen=True)
class EvalReport:
    components: dict = field(default_factory=dict)  # name -> ComponentStats
    detection: dict = field(default_factory=dict)  # criteria name -> {"ap", "pr"}

    def to_json_dict(self):
        out = {"components": {}, "detection": {}}
        for name, st in self.components.items():
            out["components"][name] = {
                "median": st.median, "mean": st.mean, "pct_within": st.pct_within,
            }
        for name, det in self.detection.items():
            out["detection"][name] = {
                "ap": det["ap"],
                "pr": [list(pt) for pt in det["pr"]],
            }
        return out

    def to_csv(self):
        lines = ["component,median,mean,pct_within_threshold"]
        for name, st in self.components.items():
            lines.append(f"{name},{st.median:.6g},{st.mean:.6g},{st.pct_within:.6g}")
        for name, det in self.detection.items():
            lines.append(f"AP[{name}],{det['ap']:.6g},,")
        return "\n".join(lines) + "\n"


def _stats(values, within):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return ComponentStats(float("nan"), float("nan"), float("nan"))
    return ComponentStats(
        median=float(np.median(values)),
        mean=float(np.mean(values)),
        pct_within=float(100.0 * np.mean(within(values))),
    )


def scene_error_stats(predictions, gts_by_scene, thresholds: Thresholds):
    """Aggregate per-component errors over id-matched predictions (gt-box mode)."""
    t_err, s_err, q_err, v_iou = [], [], [], []
    for pred in predictions:
        gt = next((g for g in gts_by_scene.get(pred.scene_id, ())
                   if g.object_id == pred.object_id), None)
        if gt is None:
            continue
        t_err.append(translation_error(pred.translation, gt.pose.translation))
        s_err.append(scale_error(np.exp(pred.log_scale), gt.pose.extents))
        q_err.append(rotation_error(pred.rotation, gt.pose.rotation, gt.symmetry_order))
        if pred.shape is not None and gt.shape is not None:
            v_iou.append(voxel_iou(pred.shape, gt.shape))
    components = {
        "translation": _stats(t_err, lambda v: v <= thresholds.delta_t),
        "scale": _stats(s_err, lambda v: v <= thresholds.delta_s),
        "rotation": _stats(q_err, lambda v: v <= thresholds.delta_q),
    }
    if v_iou:
        components["shape_iou"] = _stats(v_iou, lambda v: v >= thresholds.delta_v)
    return EvalReport(components=components)
