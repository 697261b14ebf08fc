"""Glue between fused outputs and the metric suite: flattening scene results
into evaluable records and producing full reports."""

import numpy as np

from .metrics import (
    EvalReport,
    PredictedObject,
    Thresholds,
    detection_ap,
    scene_error_stats,
)
from .synthgen import project_box, voxelize_primitive
from .types import GroundTruthObject, Pose, RotationBinTable

DETECTION_CRITERIA_SETS = {
    "all": ("box2d", "trans", "rot", "scale", "shape"),
    "box2d+trans": ("box2d", "trans"),
    "box2d+rot": ("box2d", "rot"),
    "box2d+scale": ("box2d", "scale"),
}


def category_shape_lookup(layout):
    """Canonical per-category primitive used as the predicted shape."""
    if layout is None:
        return lambda category: None
    kinds = {name: spec.shape_kind for name, spec in layout.categories.items()}
    return lambda category: (voxelize_primitive(kinds[category])
                             if category in kinds else None)


def fused_to_predictions(fused_list, scenes, rot_table: RotationBinTable,
                         layout=None):
    """Flatten fused scenes to PredictedObject records.

    Scores and categories come from the matching unary predictions; 2D boxes
    are re-projections of the predicted pose (degenerate when unprojectable);
    shapes are the canonical category primitives when a layout is supplied.
    """
    shape_of = category_shape_lookup(layout)
    scene_by_id = {s.scene_id: s for s in scenes}
    out = []
    for fused in fused_list:
        scene = scene_by_id[fused.scene_id]
        unary = scene.unary_by_id()
        for i, oid in enumerate(fused.object_ids):
            u = unary[oid]
            rotation = rot_table.bins[int(fused.rotation_bins[i])]
            pose = Pose(fused.translations[i], fused.log_scales[i], rotation)
            probe = GroundTruthObject(object_id=oid, category=u.category, pose=pose)
            try:
                box = project_box(probe, scene.camera)
            except ValueError:
                box = (0.0, 0.0, 0.0, 0.0)
            shape = shape_of(u.category) or u.shape
            out.append(PredictedObject(
                scene_id=fused.scene_id, object_id=oid, category=u.category,
                translation=fused.translations[i], log_scale=fused.log_scales[i],
                rotation=rotation, score=u.score, box2d=box, shape=shape))
    return out


def gts_by_scene(scenes):
    return {s.scene_id: list(s.gt_objects) for s in scenes}


def build_report(predictions, scenes, thresholds: Thresholds,
                 criteria_sets=None, with_detection=True) -> EvalReport:
    """Error statistics (id-matched) plus detection AP per criteria set."""
    gts = gts_by_scene(scenes)
    report = scene_error_stats(predictions, gts, thresholds)
    detection = {}
    if with_detection:
        sets = criteria_sets if criteria_sets is not None else dict(DETECTION_CRITERIA_SETS)
        for name, criteria in sets.items():
            criteria = tuple(criteria)
            if "shape" in criteria and any(p.shape is None for p in predictions):
                criteria = tuple(c for c in criteria if c != "shape")
            ap, pr = detection_ap(predictions, gts, thresholds, criteria)
            detection[name] = {"ap": ap, "pr": pr}
    return EvalReport(components=report.components, detection=detection)


def pr_points_csv(pr_points):
    lines = ["recall,precision,score"]
    for r, p, s in pr_points:
        lines.append(f"{r:.10g},{p:.10g},{s:.10g}")
    return "\n".join(lines) + "\n"
