"""End-to-end acceptance suite.

Each test prints a single PASS/FAIL line with its key measurements and
enforces both the quality bar and the runtime budget.
"""

import contextlib
import json
import os
import time

import numpy as np
import pytest

from relfuse.binning import quantize_rotation
from relfuse.cli import main as cli_main
from relfuse.crf import CRFConfig, crf_energy, crf_energy_and_grad, crf_optimize, fit_pairwise_prior
from relfuse.fusion import FusionConfig, fuse_linear, fuse_rotations, fuse_scene, unary_as_fused
from relfuse.evaluate import DETECTION_CRITERIA_SETS, fused_to_predictions, gts_by_scene
from relfuse.losses import grad_check_joint
from relfuse.metrics import (
    Thresholds,
    box2d_iou,
    detection_ap,
    rotation_error,
    scale_error,
    translation_error,
    voxel_iou,
)
from relfuse.synthgen import NoiseProfile, default_layout, make_dataset
from relfuse.types import (
    GroundTruthObject,
    Pose,
    RelativePrediction,
    SceneInstance,
    UnaryPrediction,
    VoxelGrid,
    relative_ground_truth,
)

from test_fusion import normal_equations_oracle, random_instance
from test_metrics import brute_force_ap, make_gt, make_pred, random_ap_case


_CAPSYS = None


@pytest.fixture(autouse=True)
def _live_report(capsys):
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def report(num, name, ok, detail, elapsed, budget):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    line = f"[criterion {num:02d}] {name}: {status} ({detail}; {elapsed:.2f}s < {budget:.0f}s)"
    # bypass pytest's capture so the line shows up in default runs too
    suspend = _CAPSYS.disabled() if _CAPSYS is not None else contextlib.nullcontext()
    with suspend:
        print(line, flush=True)
    assert ok, f"criterion {num} failed: {detail}"
    assert elapsed < budget, f"criterion {num} over budget: {elapsed:.2f}s >= {budget}s"


def test_criterion_01_linear_fusion_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        u, rows = random_instance(rng, n_max=8, e_max=20)
        lam = float(rng.choice([0.25, 1.0, 4.0]))
        sol = fuse_linear(u, rows, lam)
        worst = max(worst, float(np.max(np.abs(sol - normal_equations_oracle(u, rows, lam)))))
    elapsed = time.perf_counter() - start
    report(1, "linear fusion vs normal-equations oracle", worst <= 1e-8,
           f"max abs err {worst:.2e} <= 1e-8 over 200 instances", elapsed, 5.0)


def test_criterion_02_consistency_fixpoint(rot_table, dir_table):
    start = time.perf_counter()
    layout = default_layout()
    scenes = make_dataset(layout, NoiseProfile.noiseless(), 100, seed=202,
                          snap_rotations=True)
    config = FusionConfig()
    worst = 0.0
    rot_ok = True
    for scene in scenes:
        fused = fuse_scene(scene, config, rot_table, dir_table)
        gt = scene.gt_by_id()
        for i, oid in enumerate(fused.object_ids):
            g = gt[oid]
            worst = max(worst, float(np.max(np.abs(fused.translations[i] - g.pose.translation))))
            worst = max(worst, float(np.max(np.abs(fused.log_scales[i] - g.pose.log_scale))))
            if fused.rotation_bins[i] != quantize_rotation(g.pose.rotation, rot_table):
                rot_ok = False
    elapsed = time.perf_counter() - start
    report(2, "exact inputs reproduce ground truth", worst <= 1e-9 and rot_ok,
           f"max pose err {worst:.2e} <= 1e-9, rotation bins exact={rot_ok}, 100 scenes",
           elapsed, 5.0)


def test_criterion_03_golden_two_object_example():
    start = time.perf_counter()
    sol = fuse_linear(np.array([[0.0], [2.0]]), [(0, 1, [1.0])], 1.0)
    err = max(abs(sol[0, 0] - 1.0 / 3.0), abs(sol[1, 0] - 5.0 / 3.0))
    elapsed = time.perf_counter() - start
    report(3, "golden hand example u=(0,2), r=1", err <= 1e-12,
           f"solution ({sol[0,0]:.12f}, {sol[1,0]:.12f}), err {err:.1e} <= 1e-12",
           elapsed, 5.0)


def _gls_expected_reductions(noise, n=5, reps=3000, seed=0):
    """Monte Carlo oracle from the closed-form least-squares estimate: the
    fused error is a fixed linear map of the unary/relative noise."""
    rng = np.random.default_rng(seed)
    e = n * (n - 1)
    stacked = np.zeros((n + e, n))
    stacked[:n] = np.eye(n)
    k = 0
    for i in range(n):
        for j in range(n):
            if i != j:
                stacked[n + k, i] = -1.0
                stacked[n + k, j] = 1.0
                k += 1
    pinv = np.linalg.pinv(stacked)
    out = {}
    for key, su, sr in (("trans", noise.sigma_t_unary, noise.sigma_t_rel),
                        ("scale", noise.sigma_s_unary, noise.sigma_s_rel)):
        eps_u = rng.normal(0.0, su, (reps, n, 3))
        eps_r = rng.normal(0.0, sr, (reps, e, 3))
        fused_err = (np.einsum("on,rnd->rod", pinv[:, :n], eps_u)
                     + np.einsum("oe,red->rod", pinv[:, n:], eps_r))
        if key == "trans":
            med_u = np.median(np.linalg.norm(eps_u, axis=2))
            med_f = np.median(np.linalg.norm(fused_err, axis=2))
        else:
            med_u = np.median(np.mean(np.abs(eps_u), axis=2) / np.log(2.0))
            med_f = np.median(np.mean(np.abs(fused_err), axis=2) / np.log(2.0))
        out[key] = 1.0 - med_f / med_u
    return out


def test_criterion_04_benchmark_error_reduction(rot_table, dir_table):
    start = time.perf_counter()
    noise = NoiseProfile()
    layout = default_layout(objects_per_scene=(5, 5))
    scenes = make_dataset(layout, noise, 1000, seed=404)
    config = FusionConfig()
    errs = {"unary": {"t": [], "s": [], "q": []}, "fused": {"t": [], "s": [], "q": []}}
    for scene in scenes:
        gt = scene.gt_by_id()
        for name, fused in (("unary", unary_as_fused(scene)),
                            ("fused", fuse_scene(scene, config, rot_table, dir_table))):
            for i, oid in enumerate(fused.object_ids):
                g = gt[oid]
                errs[name]["t"].append(translation_error(fused.translations[i], g.pose.translation))
                errs[name]["s"].append(scale_error(np.exp(fused.log_scales[i]), g.pose.extents))
                errs[name]["q"].append(rotation_error(rot_table.bins[fused.rotation_bins[i]],
                                                      g.pose.rotation, g.symmetry_order))
    med = {k: {c: float(np.median(v)) for c, v in d.items()} for k, d in errs.items()}
    pct30 = {k: float(np.mean(np.asarray(d["q"]) <= 30.0)) * 100 for k, d in errs.items()}
    red_t = 1.0 - med["fused"]["t"] / med["unary"]["t"]
    red_s = 1.0 - med["fused"]["s"] / med["unary"]["s"]
    oracle = _gls_expected_reductions(noise)
    ok = (red_t >= 0.20 and red_s >= 0.20
          and pct30["fused"] >= pct30["unary"] - 1.0
          and abs(red_t - oracle["trans"]) <= 0.05
          and abs(red_s - oracle["scale"]) <= 0.05)
    elapsed = time.perf_counter() - start
    report(4, "benchmark-profile error reduction",
           ok,
           f"median trans {med['unary']['t']:.3f}->{med['fused']['t']:.3f} "
           f"(-{red_t*100:.0f}%, oracle -{oracle['trans']*100:.0f}%), "
           f"scale {med['unary']['s']:.3f}->{med['fused']['s']:.3f} "
           f"(-{red_s*100:.0f}%, oracle -{oracle['scale']*100:.0f}%), "
           f"rot<=30deg {pct30['unary']:.1f}%->{pct30['fused']:.1f}%",
           elapsed, 60.0)


def test_criterion_05_rotation_update_efficacy(rot_table, dir_table):
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    kappa = 16.0
    n_trials = 1000
    k = len(rot_table)
    mats = rot_table.matrices()
    hits = 0
    oracle_hits = 0
    for _ in range(n_trials):
        b_true = int(rng.integers(k))
        d_true = int(rng.integers(len(dir_table)))
        t_hat = mats[b_true] @ dir_table.bins[d_true]
        cos = dir_table.bins @ dir_table.bins[d_true]
        prob = np.exp(kappa * (cos - cos.max()))
        prob /= prob.sum()
        unary = (
            UnaryPrediction("src", "chair", np.zeros(3), np.zeros(3), np.full(k, 1.0 / k)),
            UnaryPrediction("tgt", "chair", t_hat, np.zeros(3), np.full(k, 1.0 / k)),
        )
        rel = RelativePrediction("src", "tgt", t_hat, np.zeros(3), prob)
        scene = SceneInstance("s", unary=unary, relative=(rel,))
        _, argmins = fuse_rotations(scene, FusionConfig(), rot_table, dir_table)
        hits += int(argmins[0] == b_true)
        # exhaustive-bin oracle: per-bin cost straight from the definition
        costs = np.empty(k)
        for b in range(k):
            v = mats[b].T @ t_hat
            c = dir_table.bins @ v
            d_star = int(np.argmax(c))
            costs[b] = np.log(k) + (-np.log(max(prob[d_star], 1e-12)) + 1.0 - c[d_star])
        oracle_hits += int(int(np.argmin(costs)) == b_true)
    rate = hits / n_trials
    elapsed = time.perf_counter() - start
    report(5, "rotation message passing selects the true bin",
           rate >= 0.95 and hits == oracle_hits,
           f"true-bin rate {rate*100:.1f}% >= 95%, oracle agreement {oracle_hits}/{n_trials}",
           elapsed, 10.0)


def _random_fusable_scene(rng, rot_table, dir_table):
    n = int(rng.integers(2, 6))
    gts, unary = [], []
    for i in range(n):
        pose = Pose(rng.normal(size=3), rng.normal(size=3) * 0.3,
                    rot_table.bins[rng.integers(len(rot_table))])
        gts.append(GroundTruthObject(f"o{i}", "chair", pose))
        unary.append(UnaryPrediction(f"o{i}", "chair",
                                     pose.translation + rng.normal(0, 0.3, 3),
                                     pose.log_scale, np.full(len(rot_table), 1.0 / len(rot_table))))
    rels = []
    for a in gts:
        for b in gts:
            if a.object_id != b.object_id and rng.random() < 0.6:
                exact = relative_ground_truth(a.pose, b.pose, dir_table,
                                              source_id=a.object_id, target_id=b.object_id)
                rels.append(RelativePrediction(a.object_id, b.object_id,
                                               exact.rel_translation + rng.normal(0, 0.1, 3),
                                               exact.rel_log_scale, exact.direction_prob))
    return SceneInstance("s", gt_objects=tuple(gts), unary=tuple(unary),
                         relative=tuple(rels))


def test_criterion_06_gradient_checks(rot_table, dir_table):
    from test_crf import random_context, random_priors

    start = time.perf_counter()
    rng = np.random.default_rng(606)
    h = 1e-5
    worst_joint = 0.0
    for _ in range(100):
        scene = _random_fusable_scene(rng, rot_table, dir_table)
        lam = float(rng.choice([0.5, 1.0, 2.0]))
        worst_joint = max(worst_joint,
                          grad_check_joint(scene, FusionConfig(lam=lam), epsilon=h))
    worst_crf = 0.0
    for _ in range(100):
        priors = random_priors(rng)
        cats, rotations, t_u, s_u = random_context(rng, rot_table, n=3)
        t = t_u + rng.normal(size=t_u.shape) * 0.2
        s = s_u + rng.normal(size=s_u.shape) * 0.2
        _, gt, gs = crf_energy_and_grad(t, s, cats, rotations, t_u, s_u, priors)
        for arr, grad, is_t in ((t, gt, True), (s, gs, False)):
            for i in range(arr.shape[0]):
                for kk in range(3):
                    hi, lo = arr.copy(), arr.copy()
                    hi[i, kk] += h
                    lo[i, kk] -= h
                    args = lambda a: ((a, s) if is_t else (t, a))
                    num = (crf_energy(*args(hi), cats, rotations, t_u, s_u, priors)
                           - crf_energy(*args(lo), cats, rotations, t_u, s_u, priors)) / (2 * h)
                    worst_crf = max(worst_crf,
                                    abs(grad[i, kk] - num) / max(1.0, abs(num)))
    elapsed = time.perf_counter() - start
    report(6, "analytic gradients vs central differences",
           worst_joint < 1e-4 and worst_crf < 1e-4,
           f"joint max rel err {worst_joint:.2e}, CRF max rel err {worst_crf:.2e}, "
           f"100 instances each", elapsed, 30.0)


def test_criterion_07_metric_examples_and_ap_oracle():
    start = time.perf_counter()
    th = Thresholds()
    exact = (
        translation_error([3, 4, 0], [0, 0, 0]) == 5.0,
        scale_error([2, 4, 6], [1, 2, 3]) == 1.0,
        abs(scale_error([2, 2, 3], [1, 2, 3]) - 1.0 / 3.0) < 1e-15,
        rotation_error([1, 0, 0, 0], [1, 0, 0, 0]) == 0.0,
        abs(rotation_error([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)],
                           [1, 0, 0, 0], 1) - 90.0) < 1e-9,
        rotation_error([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)],
                       [1, 0, 0, 0], 4) < 1e-9,
        voxel_iou(VoxelGrid(np.ones((4, 4, 4))), VoxelGrid(np.ones((4, 4, 4)))) == 1.0,
        voxel_iou(VoxelGrid(np.ones((4, 4, 4))), VoxelGrid(np.zeros((4, 4, 4)))) == 0.0,
        box2d_iou((0, 0, 1, 1), (0.5, 0, 1.5, 1)) == 1.0 / 3.0,
        detection_ap([make_pred(score=0.9), make_pred(t=(9, 9, 9), score=0.8, oid="p1")],
                     {"s0": [make_gt()]}, th, ("trans",))[0] == 1.0,
    )
    worst_ap = 0.0
    rng = np.random.default_rng(707)
    for case in range(50):
        preds, gts, _ = random_ap_case(rng, case)
        ap, _ = detection_ap(preds, gts, th, ("trans",))
        worst_ap = max(worst_ap, abs(ap - brute_force_ap(preds, gts, th, ("trans",))))
    elapsed = time.perf_counter() - start
    report(7, "metric examples and AP brute-force oracle",
           all(exact) and worst_ap <= 1e-12,
           f"{sum(exact)}/{len(exact)} hand examples exact, "
           f"AP max err {worst_ap:.1e} <= 1e-12 over 50 cases", elapsed, 5.0)


def test_criterion_08_detection_ap_ordering(rot_table, dir_table):
    start = time.perf_counter()
    layout = default_layout(objects_per_scene=(5, 5))
    scenes = make_dataset(layout, NoiseProfile(fp_rate=1.0), 1000, seed=808,
                          mode="detection")
    th = Thresholds()
    gts = gts_by_scene(scenes)
    criteria = DETECTION_CRITERIA_SETS["all"]
    aps = {}
    config = FusionConfig(mode="detection")
    for name in ("unary", "fused"):
        if name == "unary":
            fused_list = [unary_as_fused(s) for s in scenes]
        else:
            fused_list = [fuse_scene(s, config, rot_table, dir_table) for s in scenes]
        preds = fused_to_predictions(fused_list, scenes, rot_table, layout=layout)
        aps[name], _ = detection_ap(preds, gts, th, criteria)
    elapsed = time.perf_counter() - start
    report(8, "detection-mode AP ordering",
           aps["fused"] >= aps["unary"] + 0.02,
           f"AP(all) fused {aps['fused']:.3f} >= unary {aps['unary']:.3f} + 0.02, "
           f"1000 scenes", elapsed, 90.0)


def test_criterion_09_crf_baseline_trend(rot_table, dir_table):
    start = time.perf_counter()
    layout = default_layout()
    noise = NoiseProfile()
    train = make_dataset(layout, noise, 2000, seed=909)
    held = make_dataset(layout, noise, 500, seed=1909)
    priors = fit_pairwise_prior(train, components=10, seed=9)
    config = FusionConfig()
    crf_config = CRFConfig()
    errs = {"unary": [], "crf": [], "fused": []}
    for scene in held:
        gt = scene.gt_by_id()
        t_crf, _, _ = crf_optimize(scene, priors, crf_config, rot_table)
        fused = fuse_scene(scene, config, rot_table, dir_table)
        for i, u in enumerate(scene.unary):
            truth = gt[u.object_id].pose.translation
            errs["unary"].append(translation_error(u.translation, truth))
            errs["crf"].append(translation_error(t_crf[i], truth))
            errs["fused"].append(translation_error(fused.translations[i], truth))
    med = {k: float(np.median(v)) for k, v in errs.items()}
    elapsed = time.perf_counter() - start
    report(9, "CRF baseline sits between unary and relative fusion",
           med["crf"] <= med["unary"] and med["fused"] <= med["crf"],
           f"median trans: unary {med['unary']:.3f} >= crf {med['crf']:.3f} "
           f">= fused {med['fused']:.3f}; 2000 train / 500 held-out scenes",
           elapsed, 180.0)


def _dir_bytes(path):
    out = {}
    for root, _, files in os.walk(path):
        for name in files:
            p = os.path.join(root, name)
            with open(p, "rb") as f:
                out[os.path.relpath(p, path)] = f.read()
    return out


def test_criterion_10_cli_determinism(tmp_path):
    start = time.perf_counter()
    runs = []
    for tag in ("a", "b"):
        ds = tmp_path / f"ds_{tag}"
        fz = tmp_path / f"fz_{tag}"
        rp = tmp_path / f"rep_{tag}"
        rp.mkdir()
        assert cli_main(["gen", "--scenes", "20", "--seed", "10", "--out", str(ds)]) == 0
        assert cli_main(["fuse", "--in", str(ds), "--out", str(fz)]) == 0
        assert cli_main(["eval", "--pred", str(fz), "--gt", str(ds),
                         "--out", str(rp / "report.json")]) == 0
        runs.append((_dir_bytes(ds), _dir_bytes(fz), _dir_bytes(rp)))
    same = all(a == b for a, b in zip(runs[0], runs[1]))
    manifests_equal = (json.loads(runs[0][0]["manifest.json"])["config_hash"]
                       == json.loads(runs[1][0]["manifest.json"])["config_hash"])
    elapsed = time.perf_counter() - start
    report(10, "pipeline rerun is byte-identical",
           same and manifests_equal,
           f"dataset/fused/report trees identical across reruns, "
           f"manifest hash equal={manifests_equal}", elapsed, 30.0)
