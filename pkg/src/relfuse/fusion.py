"""Fusing unary and relative predictions into per-object scene estimates.

Translation and log-scale are fused by solving the stacked linear system
[lambda*I; A] x = [lambda*u; r] in the least-squares sense (Moore-Penrose);
rotations by a single round of message passing that adds, per bin, an
inconsistency cost against the predicted relative directions.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import frame_transform, normalize
from .types import DirectionBinTable, RotationBinTable, SceneInstance, quantize_direction

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FusionConfig:
    lam: float = 1.0  # relative importance of the unary estimates
    rotation_rel_weight_cap: float = 5.0  # neighbor weight = min(cap / n, 1)
    score_threshold: float = 0.3  # valid-set gate in detection mode
    mode: str = "gt_box"  # "gt_box" | "detection"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValueError("score_threshold must be in [0, 1]")
        if self.mode not in ("gt_box", "detection"):
            raise ValueError("mode must be 'gt_box' or 'detection'")


@dataclass(frozen=True)
class FusedScene:
    scene_id: str
    object_ids: tuple
    translations: np.ndarray  # (N, 3)
    log_scales: np.ndarray  # (N, 3)
    rotation_costs: np.ndarray  # (N, K) unnormalized NLL per rotation bin
    rotation_bins: np.ndarray  # (N,) argmin bin per object

    def index_of(self, object_id):
        return self.object_ids.index(object_id)


def fuse_linear(unary_values, relatives, lam):
    """Minimum-norm least-squares solution of [lam*I; A] x = [lam*u; r].

    `relatives` is a list of (m, n, vector) rows, each encoding x[n] - x[m] = vector.
    Each coordinate is solved independently with the same matrix; with no
    relative rows the result is exactly `u`.
    """
    u = np.atleast_2d(np.asarray(unary_values, dtype=float))
    n_obj, dim = u.shape
    rows = list(relatives)
    stacked = np.zeros((n_obj + len(rows), n_obj))
    stacked[:n_obj] = lam * np.eye(n_obj)
    rhs = np.zeros((n_obj + len(rows), dim))
    rhs[:n_obj] = lam * u
    for i, (m, n, val) in enumerate(rows):
        if m == n:
            raise ValueError("relative row must connect two distinct objects")
        stacked[n_obj + i, m] = -1.0
        stacked[n_obj + i, n] = 1.0
        rhs[n_obj + i] = np.asarray(val, dtype=float)
    sol, *_ = np.linalg.lstsq(stacked, rhs, rcond=None)
    return sol


def gated_relatives(scene: SceneInstance, config: FusionConfig):
    """Relative predictions whose source passes the valid-set gate.

    In gt_box mode scores are ignored; in detection mode a relative is used
    only if its source object's detection score is >= the threshold.
    """
    if config.mode == "gt_box":
        return list(scene.relative)
    scores = {u.object_id: u.score for u in scene.unary}
    return [r for r in scene.relative
            if scores.get(r.source_id, 0.0) >= config.score_threshold]


def _index_map(scene):
    return {u.object_id: i for i, u in enumerate(scene.unary)}

def _linear_rows(scene, config, attr):
    idx = _index_map(scene)
    rows = []
    for r in gated_relatives(scene, config):
        if r.source_id in idx and r.target_id in idx:
            rows.append((idx[r.source_id], idx[r.target_id], getattr(r, attr)))
    return rows


def fuse_translations(scene: SceneInstance, config: FusionConfig):
    u = np.stack([p.translation for p in scene.unary])
    return fuse_linear(u, _linear_rows(scene, config, "rel_translation"), config.lam)


def fuse_log_scales(scene: SceneInstance, config: FusionConfig):
    u = np.stack([p.log_scale for p in scene.unary])
    return fuse_linear(u, _linear_rows(scene, config, "rel_log_scale"), config.lam)


def delta_inconsistency(R, direction_prob, rel_translation, dir_table: DirectionBinTable):
    """Cost of rotation `R` against a predicted relative direction/translation.

    With t_hat the unit relative translation and v its expression in the
    candidate frame, d* is the bin aligning maximally with v and the cost is
    -log p(d*) + (1 - cos(d*, v)).
    """
    v = frame_transform(np.asarray(R, dtype=float), normalize(rel_translation))
    d_star = quantize_direction(v, dir_table)
    p = max(float(direction_prob[d_star]), PROB_FLOOR)
    return -np.log(p) + (1.0 - float(dir_table.bins[d_star] @ v))


def _delta_all_bins(bin_matrices, direction_prob, rel_translation, dir_table):
    # vectorized delta_inconsistency over every rotation bin
    t_hat = normalize(rel_translation)
    v = np.einsum("kji,j->ki", bin_matrices, t_hat)  # R_k^T t_hat, (K, 3)
    cos = v @ dir_table.bins.T  # (K, B)
    d_star = np.argmax(cos, axis=1)
    best = cos[np.arange(len(v)), d_star]
    p = np.maximum(np.asarray(direction_prob)[d_star], PROB_FLOOR)
    return -np.log(p) + (1.0 - best)


def fuse_rotations(scene: SceneInstance, config: FusionConfig,
                   rot_table: RotationBinTable, dir_table: DirectionBinTable):
    """Per-object rotation-bin cost vectors and argmin bins.

    Each object's unary bin NLL is augmented by a capped-weight sum of
    direction-inconsistency messages from its outgoing relatives.
    """
    k = len(rot_table)
    bin_matrices = rot_table.matrices()
    rels = gated_relatives(scene, config)
    by_source = {}
    for r in rels:
        by_source.setdefault(r.source_id, []).append(r)
    costs = np.zeros((len(scene.unary), k))
    argmins = np.zeros(len(scene.unary), dtype=int)
    for i, u in enumerate(scene.unary):
        cost = -np.log(np.maximum(u.rotation_prob, PROB_FLOOR))
        neighbors = by_source.get(u.object_id, [])
        if neighbors:
            w = min(config.rotation_rel_weight_cap / len(neighbors), 1.0)
            msg = np.zeros(k)
            for r in neighbors:
                msg += _delta_all_bins(bin_matrices, r.direction_prob,
                                       r.rel_translation, dir_table)
            cost = cost + w * msg
        costs[i] = cost
        argmins[i] = int(np.argmin(cost))
    return costs, argmins


def fuse_scene(scene: SceneInstance, config: FusionConfig,
               rot_table: RotationBinTable, dir_table: DirectionBinTable) -> FusedScene:
    costs, argmins = fuse_rotations(scene, config, rot_table, dir_table)
    return FusedScene(
        scene_id=scene.scene_id,
        object_ids=tuple(u.object_id for u in scene.unary),
        translations=fuse_translations(scene, config),
        log_scales=fuse_log_scales(scene, config),
        rotation_costs=costs,
        rotation_bins=argmins,
    )


def unary_as_fused(scene: SceneInstance) -> FusedScene:
    """The unary predictions repackaged as a FusedScene (no relational reasoning)."""
    costs = np.stack([-np.log(np.maximum(u.rotation_prob, PROB_FLOOR)) for u in scene.unary])
    return FusedScene(
        scene_id=scene.scene_id,
        object_ids=tuple(u.object_id for u in scene.unary),
        translations=np.stack([u.translation for u in scene.unary]),
        log_scales=np.stack([u.log_scale for u in scene.unary]),
        rotation_costs=costs,
        rotation_bins=np.argmin(costs, axis=1),
    )
