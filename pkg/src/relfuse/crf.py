"""Image-agnostic pairwise-prior baseline: category-pair mixtures of Gaussians
over relative translation, relative log-scale, and relative direction, with
quasi-Newton refinement of the unary translation/scale estimates."""

import json
from dataclasses import dataclass

import numpy as np

from .geometry import normalize
from .mixture import DiagonalGMM, eval_tables, fit_diag_gmm
from .optim import lbfgs_minimize
from .synthgen import splitmix64
from .types import RotationBinTable, SceneInstance

MODALITIES = ("rel_translation", "rel_log_scale", "rel_direction")


class PairPriorSet:
    """Mixture priors keyed by (source category, target category, modality)."""

    def __init__(self, priors=None, n_components=10):
        self.priors = priors or {}  # (cat_a, cat_b) -> {modality: DiagonalGMM}
        self.n_components = n_components

    def get(self, cat_a, cat_b):
        return self.priors.get((cat_a, cat_b), {})

    def __len__(self):
        return len(self.priors)

    def to_json_dict(self):
        out = {"n_components": self.n_components, "priors": {}}
        for (a, b), cell in sorted(self.priors.items()):
            out["priors"][f"{a}|{b}"] = {mod: gmm.to_dict() for mod, gmm in cell.items()}
        return out

    @staticmethod
    def from_json_dict(d):
        priors = {}
        for key, cell in d["priors"].items():
            a, b = key.split("|")
            priors[(a, b)] = {mod: DiagonalGMM.from_dict(g) for mod, g in cell.items()}
        return PairPriorSet(priors, n_components=d.get("n_components", 10))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    @staticmethod
    def load(path):
        with open(path) as f:
            return PairPriorSet.from_json_dict(json.load(f))


def fit_pairwise_prior(scenes, components=10, seed=0) -> PairPriorSet:
    """Fit mixtures to ground-truth relative statistics of every ordered
    category pair; cells with fewer samples than components are left absent."""
    samples = {}
    for scene in scenes:
        objs = scene.gt_objects
        for a in objs:
            ra = a.pose.rotation_matrix()
            for b in objs:
                if a.object_id == b.object_id:
                    continue
                rel_t = b.pose.translation - a.pose.translation
                cell = samples.setdefault((a.category, b.category),
                                          {m: [] for m in MODALITIES})
                cell["rel_translation"].append(rel_t)
                cell["rel_log_scale"].append(b.pose.log_scale - a.pose.log_scale)
                cell["rel_direction"].append(ra.T @ normalize(rel_t))
    priors = {}
    for idx, key in enumerate(sorted(samples)):
        cell = {}
        for j, mod in enumerate(MODALITIES):
            data = np.asarray(samples[key][mod])
            if len(data) < components:
                continue
            cell[mod] = fit_diag_gmm(data, components,
                                     seed=splitmix64(seed + 101 * idx + j))
        if cell:
            priors[key] = cell
    return PairPriorSet(priors, n_components=components)


def _scene_context(scene: SceneInstance, rot_table: RotationBinTable):
    cats = [u.category for u in scene.unary]
    rot_mats = rot_table.matrices()
    rotations = [rot_mats[int(np.argmax(u.rotation_prob))] for u in scene.unary]
    t_unary = np.stack([u.translation for u in scene.unary])
    s_unary = np.stack([u.log_scale for u in scene.unary])
    return cats, rotations, t_unary, s_unary


def crf_energy_and_grad(t, s, cats, rotations, t_unary, s_unary,
                        priors: PairPriorSet, lambda_data=1.0):
    """Energy = data term minus pairwise prior log-likelihoods, with analytic
    gradients w.r.t. every translation and log-scale entry.

    Rotations are held fixed (the unary argmax bin) and only enter the
    relative-direction term's frame transform.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    plan = _pair_plan(cats, rotations, priors)
    return _energy_from_plan(t, s, plan, np.asarray(t_unary, dtype=float),
                             np.asarray(s_unary, dtype=float), lambda_data)


@dataclass(frozen=True)
class _PairPlan:
    """Precomputed per-scene evaluation plan: every ordered pair whose category
    cell has a prior, its source rotation, a scatter matrix for pairwise-grad
    accumulation, and all mixture tables gathered per row so one batched
    evaluation covers every (pair, modality) term."""
    idx_i: np.ndarray  # (P,)
    idx_j: np.ndarray  # (P,)
    rots: np.ndarray  # (P, 3, 3) source rotations
    scatter: np.ndarray  # (n, P): +1 at source, -1 at target
    rows: tuple  # per modality, pair indices with that prior present
    inv_v: np.ndarray  # (N, C_max, 3) gathered tables, zero padded
    mean_inv: np.ndarray  # (N, C_max, 3)
    base: np.ndarray  # (N, C_max), -inf padded


def _pair_plan(cats, rotations, priors):
    n = len(cats)
    pair_ij = [(i, j) for i in range(n) for j in range(n)
               if i != j and priors.get(cats[i], cats[j])]
    if not pair_ij:
        return None
    idx_i = np.array([p[0] for p in pair_ij])
    idx_j = np.array([p[1] for p in pair_ij])
    rots = np.stack([rotations[k] for k in idx_i])
    scatter = np.zeros((n, len(pair_ij)))
    scatter[idx_i, np.arange(len(pair_ij))] += 1.0
    scatter[idx_j, np.arange(len(pair_ij))] -= 1.0
    # one table per distinct (category cell, modality); one row per (pair,
    # modality) term, ordered by modality so the energy can split blocks
    tables, table_of = [], {}
    rows = {mod: [] for mod in MODALITIES}
    row_tab = []
    for mod in MODALITIES:
        for p, (i, j) in enumerate(pair_ij):
            cell = priors.get(cats[i], cats[j])
            if mod not in cell:
                continue
            key = (cats[i], cats[j], mod)
            if key not in table_of:
                table_of[key] = len(tables)
                tables.append(eval_tables(cell[mod]))
            rows[mod].append(p)
            row_tab.append(table_of[key])
    c_max = max(len(tab[2]) for tab in tables)
    inv_v = np.zeros((len(tables), c_max, 3))
    mean_inv = np.zeros((len(tables), c_max, 3))
    base = np.full((len(tables), c_max), -np.inf)
    for k, (iv, mi, b) in enumerate(tables):
        inv_v[k, :len(b)] = iv
        mean_inv[k, :len(b)] = mi
        base[k, :len(b)] = b
    row_tab = np.asarray(row_tab)
    return _PairPlan(idx_i, idx_j, rots, scatter,
                     tuple(np.asarray(rows[mod], dtype=int) for mod in MODALITIES),
                     inv_v[row_tab], mean_inv[row_tab], base[row_tab])


def _energy_from_plan(t, s, plan, t_unary, s_unary, lambda_data):
    energy = lambda_data * float(np.sum((t - t_unary) ** 2) + np.sum((s - s_unary) ** 2))
    grad_t = 2.0 * lambda_data * (t - t_unary)
    grad_s = 2.0 * lambda_data * (s - s_unary)
    if plan is None:
        return energy, grad_t, grad_s
    rows_t, rows_s, rows_d = plan.rows
    rel_t = t[plan.idx_j] - t[plan.idx_i]
    rel_s = s[plan.idx_j] - s[plan.idx_i]
    dist = np.sqrt(np.sum(rel_t[rows_d] ** 2, axis=1))
    ok = dist > 1e-9
    d_safe = np.maximum(dist, 1e-9)[:, None]
    t_hat = rel_t[rows_d] / d_safe
    rots_d = plan.rots[rows_d]
    v = np.einsum("pba,pb->pa", rots_d, t_hat)  # R_i^T t_hat
    # one batched mixture evaluation over every (pair, modality) row
    x = np.concatenate([rel_t[rows_t], rel_s[rows_s], v])
    lp = (np.einsum("nd,ncd->nc", x, plan.mean_inv)
          - 0.5 * np.einsum("nd,ncd->nc", x ** 2, plan.inv_v) + plan.base)
    m = lp.max(axis=1)
    logp = m + np.log(np.exp(lp - m[:, None]).sum(axis=1))
    resp = np.exp(lp - logp[:, None])
    grad = (np.einsum("nc,ncd->nd", resp, plan.mean_inv)
            - x * np.einsum("nc,ncd->nd", resp, plan.inv_v))
    nt, ns = len(rows_t), len(rows_s)
    energy -= float(np.sum(logp[:nt + ns]) + np.sum(logp[nt + ns:][ok]))
    g_pair_t = np.zeros_like(rel_t)
    g_pair_s = np.zeros_like(rel_t)
    g_pair_t[rows_t] = grad[:nt]
    g_pair_s[rows_s] = grad[nt:nt + ns]
    # v = R^T u/|u|; dE/du = (I - t_hat t_hat^T)/|u| R (dE/dv)
    gv = grad[nt + ns:]
    w = np.einsum("pab,pb->pa", rots_d, gv)
    gu = (w - t_hat * np.sum(t_hat * w, axis=1, keepdims=True)) / d_safe
    gu[~ok] = 0.0
    g_pair_t[rows_d] += gu
    grad_t += plan.scatter @ g_pair_t
    grad_s += plan.scatter @ g_pair_s
    return energy, grad_t, grad_s


def crf_energy(t, s, cats, rotations, t_unary, s_unary, priors, lambda_data=1.0):
    return crf_energy_and_grad(t, s, cats, rotations, t_unary, s_unary,
                               priors, lambda_data)[0]


@dataclass(frozen=True)
class CRFConfig:
    lambda_data: float = 1.0
    max_iters: int = 1000
    history: int = 10
    grad_tol: float = 1e-6


def crf_optimize(scene: SceneInstance, priors: PairPriorSet,
                 config: CRFConfig, rot_table: RotationBinTable):
    """Refine the unary translations/log-scales by minimizing the CRF energy
    from the unary initialization. Returns (t, s, LBFGSResult)."""
    cats, rotations, t_unary, s_unary = _scene_context(scene, rot_table)
    n = len(cats)
    plan = _pair_plan(cats, rotations, priors)

    def fun_and_grad(x):
        t = x[:3 * n].reshape(n, 3)
        s = x[3 * n:].reshape(n, 3)
        e, gt, gs = _energy_from_plan(t, s, plan, t_unary, s_unary,
                                      config.lambda_data)
        return e, np.concatenate([gt.ravel(), gs.ravel()])

    x0 = np.concatenate([t_unary.ravel(), s_unary.ravel()])
    result = lbfgs_minimize(fun_and_grad, x0, max_iters=config.max_iters,
                            history=config.history, grad_tol=config.grad_tol)
    t = result.x[:3 * n].reshape(n, 3)
    s = result.x[3 * n:].reshape(n, 3)
    return t, s, result
