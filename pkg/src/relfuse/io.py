"""File formats: canonical JSON with 17-significant-digit floats, the dataset
and fused-scene schemas, and run-length-encoded voxel shape files."""

import hashlib
import json
import math
import struct

import numpy as np

from .fusion import FusedScene
from .types import (
    Camera,
    GroundTruthObject,
    Pose,
    RelativePrediction,
    SceneInstance,
    UnaryPrediction,
    VoxelGrid,
)

RLE_MAGIC = b"VXRL"


def _format_number(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite number in serialized output")
    return format(x, ".17g")


def dumps_canonical(obj, indent=0):
    """Deterministic JSON: insertion-ordered keys, floats at 17 significant
    digits (lossless for 64-bit values)."""
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, int, float, np.integer, np.floating)):
        return _format_number(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad} {json.dumps(str(k))}: {dumps_canonical(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[" + ", ".join(dumps_canonical(v, indent) for v in seq) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def write_canonical_json(obj, path):
    text = dumps_canonical(obj) + "\n"
    with open(path, "w") as f:
        f.write(text)
    return text


def rle_encode(grid: VoxelGrid) -> bytes:
    """Run-length encoding of occupancy quantized to uint8 over the flat grid."""
    flat = np.round(np.asarray(grid.occupancy).ravel() * 255.0).astype(np.uint8)
    out = [RLE_MAGIC, struct.pack("<H", grid.resolution)]
    i = 0
    n = len(flat)
    while i < n:
        j = i
        while j < n and flat[j] == flat[i]:
            j += 1
        out.append(struct.pack("<IB", j - i, int(flat[i])))
        i = j
    return b"".join(out)


def rle_decode(data: bytes) -> VoxelGrid:
    if data[:4] != RLE_MAGIC:
        raise ValueError("not a voxel RLE file")
    (resolution,) = struct.unpack("<H", data[4:6])
    values = []
    for off in range(6, len(data), 5):
        count, value = struct.unpack("<IB", data[off:off + 5])
        values.append(np.full(count, value, dtype=np.uint8))
    flat = np.concatenate(values).astype(float) / 255.0
    return VoxelGrid(flat.reshape((resolution,) * 3))


def scene_to_dict(scene: SceneInstance, shape_refs=None):
    """Dataset schema; `shape_refs` maps gt object id -> shape_ref string."""
    shape_refs = shape_refs or {}
    cam = scene.camera
    return {
        "scene_id": scene.scene_id,
        "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                   "width": cam.width, "height": cam.height},
        "gt_objects": [
            {
                "id": g.object_id,
                "category": g.category,
                "translation": g.pose.translation,
                "log_scale": g.pose.log_scale,
                "rotation_quat": g.pose.rotation,
                "symmetry_order": g.symmetry_order,
                "box2d": list(g.box2d) if g.box2d is not None else None,
                "shape_ref": shape_refs.get(g.object_id),
            }
            for g in scene.gt_objects
        ],
        "unary": [
            {
                "id": u.object_id,
                "category": u.category,
                "translation": u.translation,
                "log_scale": u.log_scale,
                "rotation_prob": u.rotation_prob,
                "score": u.score,
            }
            for u in scene.unary
        ],
        "relative": [
            {
                "source": r.source_id,
                "target": r.target_id,
                "rel_translation": r.rel_translation,
                "rel_log_scale": r.rel_log_scale,
                "direction_prob": r.direction_prob,
            }
            for r in scene.relative
        ],
    }


def scene_from_dict(d, shape_loader=None):
    """Inverse of scene_to_dict; `shape_loader(ref)` resolves shape files."""
    cam = Camera(**d["camera"])
    gts = []
    for g in d["gt_objects"]:
        shape = None
        if g.get("shape_ref") and shape_loader is not None:
            shape = shape_loader(g["shape_ref"])
        gts.append(GroundTruthObject(
            object_id=g["id"], category=g["category"],
            pose=Pose(g["translation"], g["log_scale"], g["rotation_quat"]),
            symmetry_order=g["symmetry_order"],
            shape=shape,
            box2d=tuple(g["box2d"]) if g.get("box2d") is not None else None,
        ))
    unary = [UnaryPrediction(u["id"], u["category"], u["translation"],
                             u["log_scale"], u["rotation_prob"], score=u["score"])
             for u in d["unary"]]
    relative = [RelativePrediction(r["source"], r["target"], r["rel_translation"],
                                   r["rel_log_scale"], r["direction_prob"])
                for r in d["relative"]]
    return SceneInstance(scene_id=d["scene_id"], camera=cam,
                         gt_objects=tuple(gts), unary=tuple(unary),
                         relative=tuple(relative))


def fused_to_dict(fused: FusedScene):
    return {
        "scene_id": fused.scene_id,
        "objects": [
            {
                "id": oid,
                "translation": fused.translations[i],
                "log_scale": fused.log_scales[i],
                "rotation_costs": fused.rotation_costs[i],
                "rotation_bin": int(fused.rotation_bins[i]),
            }
            for i, oid in enumerate(fused.object_ids)
        ],
    }


def fused_from_dict(d) -> FusedScene:
    objs = d["objects"]
    return FusedScene(
        scene_id=d["scene_id"],
        object_ids=tuple(o["id"] for o in objs),
        translations=np.array([o["translation"] for o in objs], dtype=float),
        log_scales=np.array([o["log_scale"] for o in objs], dtype=float),
        rotation_costs=np.array([o["rotation_costs"] for o in objs], dtype=float),
        rotation_bins=np.array([o["rotation_bin"] for o in objs], dtype=int),
    )


def sha256_hex(data):
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()
