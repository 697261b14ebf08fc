"""Rotation/direction bin codebooks: defaults, clustering, and symmetry queries."""

import json

import numpy as np

from .geometry import quat_geodesic, quat_multiply, yaw_quaternion
from .types import DirectionBinTable, RotationBinTable, quantize_direction

__all__ = [
    "build_direction_codebook",
    "default_direction_codebook",
    "default_rotation_codebook",
    "quantize_direction",
    "quantize_rotation",
    "symmetry_equivalent_bins",
    "load_codebook",
    "save_codebook",
]


def default_rotation_codebook() -> RotationBinTable:
    """24 yaw rotations about the up axis in 15 degree steps; bin 0 is identity."""
    angles = np.arange(24) * (2.0 * np.pi / 24.0)
    return RotationBinTable(np.stack([yaw_quaternion(a) for a in angles]))


def default_direction_codebook() -> DirectionBinTable:
    """24 unit vectors: 8 azimuths (45 deg steps) x 3 elevations (-30, 0, +30 deg)."""
    bins = []
    for elev in np.deg2rad([-30.0, 0.0, 30.0]):
        for az in np.deg2rad(np.arange(8) * 45.0):
            bins.append([np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)])
    return DirectionBinTable(np.array(bins))


def _farthest_point_init(samples, k, seed):
    rng = np.random.default_rng(seed)
    centers = [samples[rng.integers(len(samples))]]
    for _ in range(1, k):
        # farthest sample = minimal best-cosine to the chosen set
        best = np.max(np.stack([samples @ c for c in centers]), axis=0)
        centers.append(samples[int(np.argmin(best))])
    return np.stack(centers)


def build_direction_codebook(samples, k, seed=0, max_iter=100) -> DirectionBinTable:
    """Spherical k-means (cosine similarity) over unit vectors, deterministic per seed."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise ValueError("samples must have shape (n, 3)")
    distinct = np.unique(np.round(samples, 12), axis=0)
    if len(distinct) < k:
        raise ValueError("insufficient samples")
    centers = _farthest_point_init(samples, k, seed)
    assign = None
    for _ in range(max_iter):
        sims = samples @ centers.T
        new_assign = np.argmax(sims, axis=1)
        for c in range(k):
            mask = new_assign == c
            if not np.any(mask):
                # reseed empty cluster with the worst-served sample
                worst = int(np.argmin(np.max(sims, axis=1)))
                centers[c] = samples[worst]
                new_assign[worst] = c
                mask = new_assign == c
            mean = samples[mask].sum(axis=0)
            n = np.linalg.norm(mean)
            if n > 1e-12:
                centers[c] = mean / n
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    return DirectionBinTable(centers, provenance="clustered")


def spherical_kmeans_objective(samples, table: DirectionBinTable):
    """Sum of cosines between samples and their assigned centroids."""
    samples = np.asarray(samples, dtype=float)
    return float(np.max(samples @ table.bins.T, axis=1).sum())


def quantize_rotation(q, table: RotationBinTable):
    """Index of the geodesically nearest rotation bin; ties -> lowest index."""
    dists = [quat_geodesic(q, b) for b in table.bins]
    return int(np.argmin(dists))


def symmetry_equivalent_bins(bin_index, symmetry_order, table: RotationBinTable,
                             tol=1e-6):
    """Bin indices reachable from `bin_index` by composing a yaw symmetry element."""
    if symmetry_order not in (1, 2, 4):
        raise ValueError("symmetry_order must be 1, 2, or 4")
    result = set()
    base = table.bins[bin_index]
    for k in range(symmetry_order):
        g = yaw_quaternion(2.0 * np.pi * k / symmetry_order)
        q = quat_multiply(base, g)
        dists = [quat_geodesic(q, b) for b in table.bins]
        j = int(np.argmin(dists))
        if dists[j] > tol:
            raise ValueError("incompatible codebook: not closed under symmetry")
        result.add(j)
    return result


def save_codebook(table, path):
    """JSON array of K arrays (3 numbers for directions, 4 for quaternions)."""
    with open(path, "w") as f:
        json.dump([list(map(float, row)) for row in table.bins], f)


def load_codebook(path):
    with open(path) as f:
        rows = json.load(f)
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError("codebook rows must have 3 (direction) or 4 (quaternion) numbers")
    if arr.shape[1] == 3:
        return DirectionBinTable(arr, provenance="clustered")
    return RotationBinTable(arr, provenance="clustered")
