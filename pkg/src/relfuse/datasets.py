"""Directory-level dataset and fused-output reading/writing with manifests."""

import json
import os

from .io import (
    dumps_canonical,
    fused_from_dict,
    fused_to_dict,
    rle_decode,
    rle_encode,
    scene_from_dict,
    scene_to_dict,
    sha256_hex,
    write_canonical_json,
)
from .synthgen import LayoutConfig, NoiseProfile

DATASET_FORMAT = "relfuse-dataset-v1"
FUSED_FORMAT = "relfuse-fused-v1"


def _write_manifest(out_dir, payload):
    return write_canonical_json(payload, os.path.join(out_dir, "manifest.json"))


def write_dataset(scenes, out_dir, layout: LayoutConfig, noise: NoiseProfile,
                  seed, mode):
    """One JSON file per scene plus deduplicated RLE shape files; the manifest
    (written last) records config hashes and per-file digests."""
    os.makedirs(os.path.join(out_dir, "shapes"), exist_ok=True)
    shape_files = {}
    scene_entries = []
    for i, scene in enumerate(scenes):
        refs = {}
        for g in scene.gt_objects:
            if g.shape is None:
                continue
            blob = rle_encode(g.shape)
            digest = sha256_hex(blob)
            ref = f"shapes/{digest[:16]}.rle"
            if ref not in shape_files:
                with open(os.path.join(out_dir, ref), "wb") as f:
                    f.write(blob)
                shape_files[ref] = digest
            refs[g.object_id] = ref
        name = f"scene_{i:05d}.json"
        text = write_canonical_json(scene_to_dict(scene, refs),
                                    os.path.join(out_dir, name))
        scene_entries.append({"file": name, "sha256": sha256_hex(text)})
    config = {"layout": layout.to_dict(), "noise": noise.to_dict(),
              "seed": int(seed), "mode": mode, "n_scenes": len(scenes)}
    manifest = {
        "format": DATASET_FORMAT,
        **config,
        "config_hash": sha256_hex(dumps_canonical(config)),
        "scenes": scene_entries,
        "shapes": [{"file": ref, "sha256": digest}
                   for ref, digest in sorted(shape_files.items())],
    }
    return _write_manifest(out_dir, manifest)


def read_manifest(path_dir):
    with open(os.path.join(path_dir, "manifest.json")) as f:
        return json.load(f)


def read_dataset(path_dir):
    """Returns (scenes, manifest)."""
    manifest = read_manifest(path_dir)
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path_dir} is not a dataset directory")
    cache = {}

    def shape_loader(ref):
        if ref not in cache:
            with open(os.path.join(path_dir, ref), "rb") as f:
                cache[ref] = rle_decode(f.read())
        return cache[ref]

    scenes = []
    for entry in manifest["scenes"]:
        with open(os.path.join(path_dir, entry["file"])) as f:
            scenes.append(scene_from_dict(json.load(f), shape_loader))
    return scenes, manifest


def write_fused(fused_list, out_dir, config):
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, fused in enumerate(fused_list):
        name = f"fused_{i:05d}.json"
        text = write_canonical_json(fused_to_dict(fused), os.path.join(out_dir, name))
        entries.append({"file": name, "sha256": sha256_hex(text)})
    manifest = {
        "format": FUSED_FORMAT,
        "config": config,
        "config_hash": sha256_hex(dumps_canonical(config)),
        "scenes": entries,
    }
    return _write_manifest(out_dir, manifest)


def read_fused(path_dir):
    manifest = read_manifest(path_dir)
    if manifest.get("format") != FUSED_FORMAT:
        raise ValueError(f"{path_dir} is not a fused-output directory")
    fused = []
    for entry in manifest["scenes"]:
        with open(os.path.join(path_dir, entry["file"])) as f:
            fused.append(fused_from_dict(json.load(f)))
    return fused, manifest
