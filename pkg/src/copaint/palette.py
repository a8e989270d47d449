"""Per-painting palette derivation for the adaptive 12-color acrylic mode."""

from __future__ import annotations

import numpy as np

from .cluster import kmeans
from .types import MEDIA_ACRYLIC_12, PALETTE_MERGE_DIST, Palette, PaintingSetting

# Fixed internal seed: derivation depends only on the target image.
_PALETTE_SEED = 1201


def _luminance_order(colors: np.ndarray) -> np.ndarray:
    lum = 0.299 * colors[:, 0] + 0.587 * colors[:, 1] + 0.114 * colors[:, 2]
    # lexsort's last key is primary; RGB components break luminance ties
    return np.lexsort((colors[:, 2], colors[:, 1], colors[:, 0], lum))


def derive_palette(target: np.ndarray, setting: PaintingSetting) -> Palette:
    """12-means over the target's RGB pixels, luminance-sorted and deduplicated.

    Non-adaptive media return the setting's fixed palette unchanged. Centroids
    closer than PALETTE_MERGE_DIST collapse, so degenerate targets yield fewer
    than 12 colors.
    """
    if setting.media != MEDIA_ACRYLIC_12:
        return setting.palette
    pts = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    centers, _ = kmeans(pts, 12, seed=_PALETTE_SEED)
    centers = np.clip(centers, 0.0, 1.0)
    ordered = centers[_luminance_order(centers)]
    kept: list[np.ndarray] = []
    for c in ordered:
        if all(np.sum((c - prev) ** 2) >= PALETTE_MERGE_DIST ** 2 for prev in kept):
            kept.append(c)
    return Palette(colors=tuple(tuple(float(v) for v in c) for c in kept), fixed=False)
