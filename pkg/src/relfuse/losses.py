"""Loss functions over unary, relative, and fused predictions, plus an
analytic-vs-finite-difference gradient check for the joint translation loss."""

import numpy as np

from .binning import quantize_rotation, symmetry_equivalent_bins
from .fusion import PROB_FLOOR, FusedScene, FusionConfig, _linear_rows, fuse_linear
from .types import GroundTruthObject, RelativePrediction, RotationBinTable, UnaryPrediction


def unary_losses(pred: UnaryPrediction, gt: GroundTruthObject,
                 rot_table: RotationBinTable):
    """L_t, L_s, L_r (and L_v when both shapes are present).

    The rotation loss is the NLL of the ground-truth bin; for symmetric
    objects the best probability across the symmetry-equivalent bins is used.
    """
    out = {
        "L_t": float(np.sum((pred.translation - gt.pose.translation) ** 2)),
        "L_s": float(np.sum((pred.log_scale - gt.pose.log_scale) ** 2)),
    }
    gt_bin = quantize_rotation(gt.pose.rotation, rot_table)
    correct = symmetry_equivalent_bins(gt_bin, gt.symmetry_order, rot_table)
    best = max(float(pred.rotation_prob[b]) for b in correct)
    out["L_r"] = -np.log(max(best, PROB_FLOOR))
    if pred.shape is not None and gt.shape is not None:
        v = gt.shape.occupancy
        v_hat = np.clip(pred.shape.occupancy, PROB_FLOOR, 1.0 - PROB_FLOOR)
        out["L_v"] = float(-np.mean(v * np.log(v_hat) + (1.0 - v) * np.log(1.0 - v_hat)))
    return out


def relative_losses(pred: RelativePrediction, gt_rel: RelativePrediction):
    """L_rt, L_rs, and the direction NLL L_d against a one-hot ground truth."""
    gt_bin = int(np.argmax(gt_rel.direction_prob))
    return {
        "L_rt": float(np.sum((pred.rel_translation - gt_rel.rel_translation) ** 2)),
        "L_rs": float(np.sum((pred.rel_log_scale - gt_rel.rel_log_scale) ** 2)),
        "L_d": -np.log(max(float(pred.direction_prob[gt_bin]), PROB_FLOOR)),
    }


def joint_losses(fused: FusedScene, gts):
    """Squared errors of the fused translations/log-scales against ground truth.

    `gts` is a list of GroundTruthObject aligned to the fused scene by id.
    """
    by_id = {g.object_id: g for g in gts}
    l_jt = 0.0
    l_js = 0.0
    for i, oid in enumerate(fused.object_ids):
        g = by_id[oid]
        l_jt += float(np.sum((fused.translations[i] - g.pose.translation) ** 2))
        l_js += float(np.sum((fused.log_scales[i] - g.pose.log_scale) ** 2))
    return {"L_jt": l_jt, "L_js": l_js}


def grad_check_joint(scene, config: FusionConfig, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients of
    the joint translation loss w.r.t. every unary and relative translation entry.

    The fusion is linear, t* = pinv([lam*I; A]) [lam*u; r], so the analytic
    gradient is read off the pseudoinverse columns.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError("epsilon must be in [1e-7, 1e-3]")
    lam = config.lam
    n = len(scene.unary)
    u = np.stack([p.translation for p in scene.unary])
    rows = _linear_rows(scene, config, "rel_translation")
    r = np.stack([np.asarray(v, dtype=float) for _, _, v in rows]) if rows else np.zeros((0, 3))
    gt = scene.gt_by_id()
    t_gt = np.stack([gt[p.object_id].pose.translation for p in scene.unary])

    stacked = np.zeros((n + len(rows), n))
    stacked[:n] = lam * np.eye(n)
    for i, (m, t, _) in enumerate(rows):
        stacked[n + i, m] = -1.0
        stacked[n + i, t] = 1.0
    pinv = np.linalg.pinv(stacked)  # (n, n + E)

    def loss(u_val, r_val):
        # numeric side goes through the production least-squares path
        fused = fuse_linear(u_val, [(m, t, r_val[i]) for i, (m, t, _) in enumerate(rows)], lam)
        return float(np.sum((fused - t_gt) ** 2))

    rhs = np.concatenate([lam * u, r], axis=0)
    diff = pinv @ rhs - t_gt  # (n, 3)
    grad_u = 2.0 * lam * (pinv[:, :n].T @ diff)
    grad_r = 2.0 * (pinv[:, n:].T @ diff)

    max_err = 0.0
    for analytic, base in ((grad_u, u), (grad_r, r)):
        for i in range(base.shape[0]):
            for axis in range(3):
                hi = base.copy()
                lo = base.copy()
                hi[i, axis] += epsilon
                lo[i, axis] -= epsilon
                if base is u:
                    numeric = (loss(hi, r) - loss(lo, r)) / (2.0 * epsilon)
                else:
                    numeric = (loss(u, hi) - loss(u, lo)) / (2.0 * epsilon)
                err = abs(analytic[i, axis] - numeric) / max(1.0, abs(numeric))
                max_err = max(max_err, err)
    return max_err
