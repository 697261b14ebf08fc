"""Diagonal-covariance Gaussian mixtures fit by EM with k-means initialization."""

from dataclasses import dataclass, field

import numpy as np

VAR_FLOOR = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiagonalGMM:
    weights: np.ndarray  # (C,)
    means: np.ndarray  # (C, D)
    variances: np.ndarray  # (C, D), diagonal covariances
    loglik_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("weights must form a simplex")
        if np.any(v < VAR_FLOOR - 1e-15):
            raise ValueError("variances below floor")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self):
        return len(self.weights)

    def _component_logpdf(self, x):
        # quadratic form expanded so everything is a (n, D) @ (D, C) matmul
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inv_v = 1.0 / self.variances  # (C, D)
        quad = (x ** 2) @ inv_v.T - 2.0 * (x @ (self.means * inv_v).T)
        const = (np.sum(self.means ** 2 * inv_v, axis=1)
                 + np.sum(np.log(self.variances), axis=1)
                 + self.means.shape[1] * LOG_2PI)
        return -0.5 * (quad + const[None])

    def log_prob(self, x):
        """Log density at each row of x."""
        lp = self._component_logpdf(x) + np.log(np.maximum(self.weights, 1e-300))[None]
        m = lp.max(axis=1)
        return m + np.log(np.sum(np.exp(lp - m[:, None]), axis=1))

    def grad_log_prob(self, x):
        """Gradient of the log density; (D,) for a single point, (n, D) for a
        batch of rows."""
        x = np.asarray(x, dtype=float)
        grad = self.log_prob_and_grad(np.atleast_2d(x))[1]
        return grad[0] if x.ndim == 1 else grad

    def log_prob_and_grad(self, x):
        """Log density and its gradient for a batch of rows, shapes (n,), (n, D)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return eval_from_tables(x, eval_tables(self))

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @staticmethod
    def from_dict(d):
        return DiagonalGMM(np.asarray(d["weights"]), np.asarray(d["means"]),
                           np.asarray(d["variances"]))


def eval_tables(gmm: DiagonalGMM):
    """Constants of the per-component log density, precomputed so repeated
    evaluations (inner optimization loops) reduce to two matmuls."""
    inv_v = 1.0 / gmm.variances  # (C, D)
    mean_inv = gmm.means * inv_v  # (C, D)
    const = (np.sum(gmm.means ** 2 * inv_v, axis=1)
             + np.sum(np.log(gmm.variances), axis=1)
             + gmm.means.shape[1] * LOG_2PI)
    base = np.log(np.maximum(gmm.weights, 1e-300)) - 0.5 * const  # (C,)
    return inv_v, mean_inv, base


def eval_from_tables(x, tables):
    """log_prob_and_grad for a (n, D) batch given precomputed eval_tables."""
    inv_v, mean_inv, base = tables
    lp = x @ mean_inv.T - 0.5 * ((x ** 2) @ inv_v.T) + base[None]
    m = lp.max(axis=1)
    logp = m + np.log(np.exp(lp - m[:, None]).sum(axis=1))
    resp = np.exp(lp - logp[:, None])
    grad = resp @ mean_inv - x * (resp @ inv_v)
    return logp, grad


def _kmeans(x, k, rng, max_iter=50):
    # k-means++ seeding, Lloyd iterations
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min(np.stack([np.sum((x - c) ** 2, axis=1) for c in centers]), axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    centers = np.stack(centers)
    assign = None
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
        for c in range(k):
            mask = assign == c
            if np.any(mask):
                centers[c] = x[mask].mean(axis=0)
            else:
                centers[c] = x[np.argmax(np.min(d2, axis=1))]
    return centers, assign


def fit_diag_gmm(x, n_components, seed=0, max_iter=200, tol=1e-6) -> DiagonalGMM:
    """EM for a diagonal-covariance mixture; deterministic given the seed.

    Stops at `max_iter` iterations or when the mean log-likelihood improves by
    less than `tol`. The per-iteration log-likelihoods are kept on the result
    (`loglik_history`) and are non-decreasing.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    if n < n_components:
        raise ValueError("insufficient samples")
    rng = np.random.default_rng(seed)
    centers, assign = _kmeans(x, n_components, rng)
    weights = np.full(n_components, 1.0 / n_components)
    means = centers.copy()
    variances = np.full((n_components, d), max(float(x.var(axis=0).mean()), VAR_FLOOR))
    for c in range(n_components):
        mask = assign == c
        if np.count_nonzero(mask) > 1:
            variances[c] = np.maximum(x[mask].var(axis=0), VAR_FLOOR)
            weights[c] = np.count_nonzero(mask) / n
    weights /= weights.sum()

    history = []
    prev = -np.inf
    for _ in range(max_iter):
        model = DiagonalGMM(weights, means, variances)
        lp = model._component_logpdf(x) + np.log(np.maximum(weights, 1e-300))[None]
        m = lp.max(axis=1)
        log_norm = m + np.log(np.sum(np.exp(lp - m[:, None]), axis=1))
        loglik = float(np.mean(log_norm))
        history.append(loglik)
        resp = np.exp(lp - log_norm[:, None])  # (n, C)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        sq = resp.T @ (x ** 2) / nk[:, None]
        variances = np.maximum(sq - means ** 2, VAR_FLOOR)
        if loglik - prev < tol:
            break
        prev = loglik
    return DiagonalGMM(weights / weights.sum(), means, variances,
                       loglik_history=tuple(history))
