"""Classical saliency and region segmentation used by the dataset pipeline.

Both are self-contained substitutes for heavyweight learned models, with
deterministic output so dataset generation is reproducible. External
saliency/segmentation services can be swapped in at the pipeline level; these
are the built-ins.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .cluster import kmeans

_SEGMENT_KMEANS_SEED = 6021
_SEGMENT_CLUSTERS = 6
_MIN_REGION_FRACTION = 0.01

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _luminance(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _minmax(field: np.ndarray) -> np.ndarray | None:
    lo, hi = float(field.min()), float(field.max())
    if hi - lo <= 1e-12:
        return None
    return (field - lo) / (hi - lo)


def saliency_map(image: np.ndarray) -> np.ndarray:
    """Scalar saliency in [0,1]: smoothed edge energy blended with a center prior.

    Edge energy is the Sobel gradient magnitude of luminance, Gaussian-smoothed
    with sigma = 2% of image height. The prior is a centered Gaussian with
    sigma = 35% of each dimension. Each term is min-max normalized; constant
    terms (e.g. the edge field of a uniform image) are dropped, and the
    remaining terms are averaged.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    lum = _luminance(img)
    gy = ndimage.sobel(lum, axis=0, mode="reflect")
    gx = ndimage.sobel(lum, axis=1, mode="reflect")
    energy = ndimage.gaussian_filter(np.hypot(gx, gy), sigma=0.02 * h, mode="reflect")
    ys = (np.arange(h, dtype=np.float64) - (h - 1) / 2.0)[:, None]
    xs = (np.arange(w, dtype=np.float64) - (w - 1) / 2.0)[None, :]
    prior = np.exp(-(xs ** 2 / (2.0 * (0.35 * w) ** 2)
                     + ys ** 2 / (2.0 * (0.35 * h) ** 2)))
    terms = [t for t in (_minmax(energy), _minmax(prior)) if t is not None]
    if not terms:
        return np.zeros((h, w), dtype=np.float64)
    return sum(terms) / len(terms)


def salient_region_mask(saliency: np.ndarray, quantile: float) -> np.ndarray:
    """Pixels carrying the top ``quantile`` share of total saliency mass."""
    flat = saliency.ravel()
    total = float(flat.sum())
    if total <= 0.0:
        return np.zeros_like(saliency, dtype=bool)
    order = np.sort(flat)[::-1]
    csum = np.cumsum(order)
    k = int(np.searchsorted(csum, quantile * total, side="left"))
    k = min(k, len(order) - 1)
    return saliency >= order[k]


def segment_regions(image: np.ndarray) -> np.ndarray:
    """Integer label map partitioning the image into color-coherent regions.

    Seeded 6-means in RGB, then 4-connected components per cluster; components
    under 1% of pixels are merged into the neighbor sharing the longest
    border. Labels are contiguous from 0 in raster order of first appearance.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    _, labels = kmeans(img.reshape(-1, 3), _SEGMENT_CLUSTERS, seed=_SEGMENT_KMEANS_SEED)
    clusters = labels.reshape(h, w)
    comp = np.zeros((h, w), dtype=np.int64)
    offset = 0
    for value in np.unique(clusters):
        lab, n = ndimage.label(clusters == value, structure=_FOUR_CONN)
        comp[lab > 0] = lab[lab > 0] + offset
        offset += n
    comp -= 1  # component ids from 0
    comp = _merge_small_components(comp, min_size=max(1, int(np.ceil(_MIN_REGION_FRACTION * h * w))))
    return _relabel_raster_order(comp)


def _border_counts(comp: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a != b
        if not diff.any():
            continue
        pairs = np.stack([a[diff], b[diff]], axis=1)
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1)
        keys, cnts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True)
        for (x, y), c in zip(keys, cnts):
            key = (int(x), int(y))
            counts[key] = counts.get(key, 0) + int(c)
    return counts


def _merge_small_components(comp: np.ndarray, min_size: int) -> np.ndarray:
    comp = comp.copy()
    while True:
        ids, sizes = np.unique(comp, return_counts=True)
        if len(ids) <= 1:
            return comp
        small = [(s, i) for i, s in zip(ids, sizes) if s < min_size]
        if not small:
            return comp
        borders = _border_counts(comp)
        neighbor_len: dict[int, dict[int, int]] = {}
        for (a, b), c in borders.items():
            neighbor_len.setdefault(a, {})[b] = neighbor_len.setdefault(a, {}).get(b, 0) + c
            neighbor_len.setdefault(b, {})[a] = neighbor_len.setdefault(b, {}).get(a, 0) + c
        merged_any = False
        absorbed: set[int] = set()
        # smallest first; ties by id for determinism
        for _, cid in sorted(small):
            cid = int(cid)
            if cid in absorbed:
                continue
            neighbors = neighbor_len.get(cid)
            if not neighbors:
                continue
            # longest shared border; ties to the lowest neighbor id
            target = min(neighbors, key=lambda nid: (-neighbors[nid], nid))
            if target in absorbed:
                continue
            comp[comp == cid] = target
            absorbed.add(cid)
            merged_any = True
        if not merged_any:
            return comp


def _relabel_raster_order(comp: np.ndarray) -> np.ndarray:
    flat = comp.ravel()
    ids, first = np.unique(flat, return_index=True)
    rank = np.empty(len(ids), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(ids))
    return rank[np.searchsorted(ids, flat)].reshape(comp.shape)


def region_sizes(labels: np.ndarray) -> np.ndarray:
    """Pixel count per region id, index-aligned with the label values."""
    return np.bincount(labels.ravel())
