"""Scikit-learn-style estimator wrappers so the fusion and CRF baselines
compose with standard pipelines (get_params/set_params, fit/predict)."""

from sklearn.base import BaseEstimator

from .binning import default_direction_codebook, default_rotation_codebook
from .crf import CRFConfig, PairPriorSet, crf_optimize, fit_pairwise_prior
from .fusion import FusedScene, FusionConfig, fuse_scene, unary_as_fused


class SceneFuser(BaseEstimator):
    """Combines unary and relative predictions into fused scene layouts.

    Stateless apart from its parameters; `fit` validates them and returns self.
    `predict` maps a list of SceneInstance to a list of FusedScene.
    """

    def __init__(self, lam=1.0, rotation_rel_weight_cap=5.0, score_threshold=0.3,
                 mode="gt_box", rot_table=None, dir_table=None):
        self.lam = lam
        self.rotation_rel_weight_cap = rotation_rel_weight_cap
        self.score_threshold = score_threshold
        self.mode = mode
        self.rot_table = rot_table
        self.dir_table = dir_table

    def _config(self):
        return FusionConfig(lam=self.lam,
                            rotation_rel_weight_cap=self.rotation_rel_weight_cap,
                            score_threshold=self.score_threshold,
                            mode=self.mode)

    def _tables(self):
        return (self.rot_table or default_rotation_codebook(),
                self.dir_table or default_direction_codebook())

    def fit(self, X=None, y=None):
        self._config()
        return self

    def predict(self, X):
        config = self._config()
        rot_table, dir_table = self._tables()
        return [fuse_scene(scene, config, rot_table, dir_table) for scene in X]

    transform = predict


class CRFRefiner(BaseEstimator):
    """Fits category-pair mixture priors on ground truth, then refines unary
    translations/log-scales per scene by quasi-Newton energy minimization."""

    def __init__(self, n_components=10, lambda_data=1.0, max_iters=1000,
                 seed=0, rot_table=None):
        self.n_components = n_components
        self.lambda_data = lambda_data
        self.max_iters = max_iters
        self.seed = seed
        self.rot_table = rot_table

    def fit(self, X, y=None):
        self.priors_ = fit_pairwise_prior(X, components=self.n_components,
                                          seed=self.seed)
        return self

    def set_priors(self, priors: PairPriorSet):
        self.priors_ = priors
        return self

    def predict(self, X):
        if not hasattr(self, "priors_"):
            raise RuntimeError("CRFRefiner is not fitted")
        rot_table = self.rot_table or default_rotation_codebook()
        config = CRFConfig(lambda_data=self.lambda_data, max_iters=self.max_iters)
        out = []
        for scene in X:
            t, s, _ = crf_optimize(scene, self.priors_, config, rot_table)
            base = unary_as_fused(scene)
            out.append(FusedScene(scene_id=base.scene_id,
                                  object_ids=base.object_ids,
                                  translations=t, log_scales=s,
                                  rotation_costs=base.rotation_costs,
                                  rotation_bins=base.rotation_bins))
        return out
