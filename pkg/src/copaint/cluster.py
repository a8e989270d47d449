"""Seeded k-means shared by palette derivation and region segmentation.

Hand-rolled Lloyd's algorithm so runs are bit-reproducible and assignment
tie-breaking is pinned (lowest centroid index wins), which golden-file tests
elsewhere rely on.
"""

from __future__ import annotations

import numpy as np


def _kmeanspp_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(pts)
    centers = np.empty((k, pts.shape[1]), dtype=np.float64)
    centers[0] = pts[int(rng.integers(n))]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = pts[0]
            continue
        cdf = np.cumsum(d2 / total)
        idx = int(np.searchsorted(cdf, rng.random(), side="right"))
        idx = min(idx, n - 1)
        centers[j] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))
    return centers


def kmeans(points: np.ndarray, k: int, seed: int,
           max_iters: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Cluster ``points`` (n, d) into ``k`` groups; returns (centroids, labels).

    k is capped at the number of points. Empty clusters keep their previous
    centroid. Deterministic for fixed inputs and seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty (n, d) array")
    k = min(int(k), len(pts))
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(pts, k, rng)
    labels = np.zeros(len(pts), dtype=np.intp)
    for _ in range(max_iters):
        d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)  # ties -> lowest index
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for j in range(k):
            members = pts[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers, labels
