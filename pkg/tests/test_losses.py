import numpy as np
import pytest

from relfuse.binning import quantize_rotation
from relfuse.fusion import FusionConfig, fuse_scene
from relfuse.losses import grad_check_joint, joint_losses, relative_losses, unary_losses
from relfuse.types import (
    GroundTruthObject,
    Pose,
    RelativePrediction,
    SceneInstance,
    UnaryPrediction,
    VoxelGrid,
    relative_ground_truth,
)

from conftest import one_hot


def gt_object(rng, rot_table, oid="o0", symmetry_order=1, shape=None):
    q = rot_table.bins[rng.integers(len(rot_table))]
    pose = Pose(rng.normal(size=3), rng.normal(size=3), q)
    return GroundTruthObject(oid, "chair", pose, symmetry_order=symmetry_order, shape=shape)


def exact_unary(gt, rot_table):
    b = quantize_rotation(gt.pose.rotation, rot_table)
    return UnaryPrediction(gt.object_id, gt.category, gt.pose.translation,
                           gt.pose.log_scale, one_hot(len(rot_table), b), shape=gt.shape)


def test_unary_losses_zero_for_exact(rot_table):
    rng = np.random.default_rng(0)
    shape = VoxelGrid(np.ones((4, 4, 4)))
    gt = gt_object(rng, rot_table, shape=shape)
    losses = unary_losses(exact_unary(gt, rot_table), gt, rot_table)
    assert losses["L_t"] == 0.0
    assert losses["L_s"] == 0.0
    assert losses["L_r"] == pytest.approx(0.0, abs=1e-12)
    assert losses["L_v"] == pytest.approx(0.0, abs=1e-9)


def test_unary_translation_loss_is_squared_norm(rot_table):
    rng = np.random.default_rng(1)
    gt = gt_object(rng, rot_table)
    pred = UnaryPrediction(gt.object_id, gt.category,
                           gt.pose.translation + np.array([1.0, 0, 0]),
                           gt.pose.log_scale, one_hot(24, 0))
    assert unary_losses(pred, gt, rot_table)["L_t"] == pytest.approx(1.0, abs=1e-12)


def test_unary_rotation_loss_uniform_and_symmetry(rot_table):
    gt = GroundTruthObject("o0", "table", Pose(np.zeros(3), np.zeros(3), [1, 0, 0, 0]),
                           symmetry_order=4)
    uniform = UnaryPrediction("o0", "table", np.zeros(3), np.zeros(3),
                              np.full(24, 1.0 / 24.0))
    assert unary_losses(uniform, gt, rot_table)["L_r"] == pytest.approx(np.log(24.0), abs=1e-12)
    # mass on a symmetry-equivalent bin (180 deg = bin 12) counts for order-2
    gt2 = GroundTruthObject("o0", "table", Pose(np.zeros(3), np.zeros(3), [1, 0, 0, 0]),
                            symmetry_order=2)
    pred = UnaryPrediction("o0", "table", np.zeros(3), np.zeros(3), one_hot(24, 12))
    assert unary_losses(pred, gt2, rot_table)["L_r"] == pytest.approx(0.0, abs=1e-12)


def test_relative_losses_examples(dir_table):
    gt_rel = RelativePrediction("a", "b", np.array([1.0, 0, 0]), np.zeros(3),
                                one_hot(24, 8))
    half = np.zeros(24)
    half[8] = 0.5
    half[9] = 0.5
    pred = RelativePrediction("a", "b", np.array([1.0, 2.0, 0.0]),
                              np.zeros(3), half)
    losses = relative_losses(pred, gt_rel)
    assert losses["L_rt"] == pytest.approx(4.0, abs=1e-12)
    assert losses["L_rs"] == 0.0
    assert losses["L_d"] == pytest.approx(np.log(2.0), abs=1e-12)


def consistent_scene(rng, rot_table, dir_table, n=4):
    gts = [gt_object(rng, rot_table, oid=f"o{i}") for i in range(n)]
    unary = [exact_unary(g, rot_table) for g in gts]
    rels = [relative_ground_truth(a.pose, b.pose, dir_table,
                                  source_id=a.object_id, target_id=b.object_id)
            for a in gts for b in gts if a.object_id != b.object_id]
    return SceneInstance("s", gt_objects=tuple(gts), unary=tuple(unary),
                         relative=tuple(rels))


def test_joint_losses_zero_on_consistent_scene(rot_table, dir_table):
    rng = np.random.default_rng(2)
    scene = consistent_scene(rng, rot_table, dir_table)
    fused = fuse_scene(scene, FusionConfig(), rot_table, dir_table)
    losses = joint_losses(fused, scene.gt_objects)
    assert losses["L_jt"] <= 1e-18
    assert losses["L_js"] <= 1e-18


def noisy_scene(rng, rot_table, dir_table, n=4):
    scene = consistent_scene(rng, rot_table, dir_table, n=n)
    unary = [UnaryPrediction(u.object_id, u.category,
                             u.translation + rng.normal(0, 0.3, 3),
                             u.log_scale, u.rotation_prob)
             for u in scene.unary]
    rels = [RelativePrediction(r.source_id, r.target_id,
                               r.rel_translation + rng.normal(0, 0.1, 3),
                               r.rel_log_scale, r.direction_prob)
            for r in scene.relative]
    return SceneInstance("s", gt_objects=scene.gt_objects, unary=tuple(unary),
                         relative=tuple(rels))


def test_grad_check_joint_small_error(rot_table, dir_table):
    rng = np.random.default_rng(3)
    for _ in range(5):
        scene = noisy_scene(rng, rot_table, dir_table)
        err = grad_check_joint(scene, FusionConfig(lam=float(rng.choice([0.5, 1.0, 2.0]))))
        assert err < 1e-4


def test_grad_check_epsilon_validation(rot_table, dir_table):
    rng = np.random.default_rng(4)
    scene = noisy_scene(rng, rot_table, dir_table, n=2)
    with pytest.raises(ValueError):
        grad_check_joint(scene, FusionConfig(), epsilon=1e-8)
    with pytest.raises(ValueError):
        grad_check_joint(scene, FusionConfig(), epsilon=1e-2)
