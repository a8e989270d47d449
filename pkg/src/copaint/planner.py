"""Greedy budgeted stroke planning against a target image.

The planner fills stroke slots one at a time: sample a batch of random valid
candidates, keep the one with the lowest loss after rendering, accept it only
if it strictly improves on the current loss, stop at the first slot with no
improvement. A coordinate-descent refinement pass then nudges each stroke's
continuous fields. Identical inputs and seed give identical plans.

Loss is ``pixel_weight * mean-over-scales(weighted MSE of block-downsampled
images) + edge_weight * weighted MSE of Sobel gradient magnitudes``. When a
reference canvas is supplied, contributions from reference-human pixels whose
color the evaluated canvas changed are multiplied by (1 + preserve_penalty);
block weights at coarser scales are the block means of the per-pixel weights.

Candidate evaluation is exact but incremental: a stroke edit only changes
pixels inside its footprint, and every loss term decomposes per pixel (or per
block), so the evaluator recomputes contributions on the affected rectangle
and reuses cached contributions everywhere else. ``_LossEvaluator`` is tested
against the standalone ``compute_loss`` for equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError
from .render import (
    bezier_points,
    composite_region,
    geometry_bbox,
    paint_geometry,
    stamp_geometry,
)
from .types import (
    AUTHOR_HUMAN,
    MEDIA_MARKER,
    Canvas,
    PaintingSetting,
    StrokeParams,
    StrokePlan,
)

# Independent seed streams so greedy sampling and refinement never share state.
_PLAN_STREAM = 0x706C616E
_REFINE_STREAM = 0x72666E31

# Refinement stops once the perturbation step has been halved into irrelevance.
_MIN_REFINE_STEP = 1e-4


@dataclass(frozen=True)
class LossConfig:
    pixel_weight: float = 1.0
    edge_weight: float = 0.5
    scales: tuple[int, ...] = (1, 2, 4)
    preserve_penalty: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if self.pixel_weight < 0 or self.edge_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.pixel_weight == 0 and self.edge_weight == 0:
            raise ValueError("at least one of pixel_weight, edge_weight must be positive")
        if not self.scales or any(s < 1 for s in self.scales):
            raise ValueError("scales must be a non-empty list of factors >= 1")
        if self.preserve_penalty < 0:
            raise ValueError("preserve_penalty must be non-negative")


@dataclass(frozen=True)
class PlannerConfig:
    candidates_per_stroke: int = 64
    refine_iters: int = 30
    refine_step: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.candidates_per_stroke < 1:
            raise ValueError("candidates_per_stroke must be >= 1")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")
        if self.refine_step <= 0:
            raise ValueError("refine_step must be positive")


def _luminance(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _sobel_mag(lum: np.ndarray) -> np.ndarray:
    # /8 normalizes the Sobel kernel to a per-pixel derivative estimate, so
    # the edge term lives on the same scale as the pixel term
    gy = ndimage.sobel(lum, axis=0, mode="reflect") / 8.0
    gx = ndimage.sobel(lum, axis=1, mode="reflect") / 8.0
    return np.hypot(gx, gy)


def _pool_means(arr: np.ndarray, s: int) -> np.ndarray:
    """Block-mean downsample by factor ``s``; ragged trailing blocks average
    over their actual pixels. ``s == 1`` returns the input as float64."""
    a = np.asarray(arr, dtype=np.float64)
    if s == 1:
        return a
    h, w = a.shape[:2]
    ridx = np.arange(0, h, s)
    cidx = np.arange(0, w, s)
    sums = np.add.reduceat(np.add.reduceat(a, ridx, axis=0), cidx, axis=1)
    rcounts = np.minimum(ridx + s, h) - ridx
    ccounts = np.minimum(cidx + s, w) - cidx
    counts = np.outer(rcounts, ccounts).astype(np.float64)
    if a.ndim == 3:
        counts = counts[:, :, None]
    return sums / counts


def _changed_weights(pixels: np.ndarray, ref_pixels: np.ndarray,
                     human: np.ndarray, penalty: float) -> np.ndarray:
    changed = np.any(pixels != ref_pixels, axis=2)
    return 1.0 + penalty * (human & changed).astype(np.float64)


def compute_loss(canvas: Canvas, target: np.ndarray, cfg: LossConfig | None = None,
                 reference: Canvas | None = None) -> float:
    """Perceptual mismatch between a canvas and a target image.

    ``reference`` activates the preservation term: per-pixel contributions
    where the reference marks human authorship and the canvas color differs
    from the reference color are scaled by (1 + preserve_penalty).
    """
    cfg = cfg or LossConfig()
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.shape != canvas.pixels.shape:
        raise DimensionMismatchError(
            f"canvas {canvas.pixels.shape} vs target {tgt.shape}")
    pix = canvas.pixels
    h, w = pix.shape[:2]
    weights = None
    if reference is not None and cfg.preserve_penalty > 0:
        if reference.pixels.shape != pix.shape:
            raise DimensionMismatchError("reference dimensions differ from canvas")
        weights = _changed_weights(pix, reference.pixels,
                                   reference.authorship == AUTHOR_HUMAN,
                                   cfg.preserve_penalty)
    total = 0.0
    if cfg.pixel_weight > 0:
        acc = 0.0
        for s in cfg.scales:
            diff2 = (_pool_means(pix, s) - _pool_means(tgt, s)) ** 2
            if weights is not None:
                diff2 = _pool_means(weights, s)[:, :, None] * diff2
            acc += diff2.sum() / diff2.size
        total += cfg.pixel_weight * acc / len(cfg.scales)
    if cfg.edge_weight > 0:
        e = (_sobel_mag(_luminance(pix)) - _sobel_mag(_luminance(tgt))) ** 2
        if weights is not None:
            e = weights * e
        total += cfg.edge_weight * e.sum() / (h * w)
    return float(total)


class _LossEvaluator:
    """Incremental, exact re-evaluation of compute_loss under local pixel edits.

    ``eval_region`` answers "what would the loss be if this rectangle of
    pixels were replaced" without touching state; ``commit_region`` applies
    the edit and updates the cached contribution fields.
    """

    def __init__(self, target: np.ndarray, cfg: LossConfig,
                 reference: Canvas | None = None):
        self.cfg = cfg
        self.target = np.asarray(target, dtype=np.float64)
        self.h, self.w = self.target.shape[:2]
        self.use_pixel = cfg.pixel_weight > 0
        self.use_edge = cfg.edge_weight > 0
        self.scales = cfg.scales
        self.ref_pixels = None
        self.human = None
        self.penalty = 0.0
        if reference is not None and cfg.preserve_penalty > 0:
            human = reference.authorship == AUTHOR_HUMAN
            if human.any():
                self.ref_pixels = reference.pixels
                self.human = human
                self.penalty = cfg.preserve_penalty
        if self.use_pixel:
            self.target_pools = [_pool_means(self.target, s) for s in self.scales]
        if self.use_edge:
            self.target_mag = _sobel_mag(_luminance(self.target))
        self.pixels: np.ndarray | None = None

    # -- state --------------------------------------------------------------

    def reset(self, pixels: np.ndarray) -> None:
        self.pixels = np.array(pixels, dtype=np.float64)
        if self.penalty > 0:
            self.wmap = _changed_weights(self.pixels, self.ref_pixels,
                                         self.human, self.penalty)
        else:
            self.wmap = None
        self.loss = 0.0
        if self.use_pixel:
            self.contribs = []
            self.numels = []
            for s, tpool in zip(self.scales, self.target_pools):
                diff2 = (_pool_means(self.pixels, s) - tpool) ** 2
                if self.wmap is not None:
                    diff2 = _pool_means(self.wmap, s)[:, :, None] * diff2
                self.contribs.append(diff2)
                self.numels.append(diff2.size)
                self.loss += self.cfg.pixel_weight * diff2.sum() / diff2.size / len(self.scales)
        if self.use_edge:
            self.lum = _luminance(self.pixels)
            e = (_sobel_mag(self.lum) - self.target_mag) ** 2
            if self.wmap is not None:
                e = self.wmap * e
            self.edge_contrib = e
            self.loss += self.cfg.edge_weight * e.sum() / (self.h * self.w)
        self.loss = float(self.loss)

    # -- edits --------------------------------------------------------------

    def eval_region(self, region: np.ndarray, bbox: tuple[int, int, int, int]) -> float:
        return self._apply(region, bbox, commit=False)

    def commit_region(self, region: np.ndarray, bbox: tuple[int, int, int, int]) -> None:
        self._apply(region, bbox, commit=True)

    def _apply(self, region: np.ndarray, bbox: tuple[int, int, int, int],
               commit: bool) -> float:
        r0, r1, c0, c1 = bbox
        h, w = self.h, self.w
        delta = 0.0
        w_region = None
        if self.wmap is not None:
            changed = np.any(region != self.ref_pixels[r0:r1, c0:c1], axis=2)
            w_region = 1.0 + self.penalty * (self.human[r0:r1, c0:c1] & changed)
        if self.use_pixel:
            for si, s in enumerate(self.scales):
                br0, br1 = r0 // s, -(-r1 // s)
                bc0, bc1 = c0 // s, -(-c1 // s)
                er0, er1 = br0 * s, min(br1 * s, h)
                ec0, ec1 = bc0 * s, min(bc1 * s, w)
                ext = self.pixels[er0:er1, ec0:ec1]
                if s > 1 or (er0, er1, ec0, ec1) != (r0, r1, c0, c1):
                    ext = ext.copy()
                    ext[r0 - er0:r1 - er0, c0 - ec0:c1 - ec0] = region
                else:
                    ext = region
                pooled = _pool_means(ext, s)
                diff2 = (pooled - self.target_pools[si][br0:br1, bc0:bc1]) ** 2
                if w_region is not None:
                    extw = self.wmap[er0:er1, ec0:ec1].copy()
                    extw[r0 - er0:r1 - er0, c0 - ec0:c1 - ec0] = w_region
                    diff2 = _pool_means(extw, s)[:, :, None] * diff2
                old = self.contribs[si][br0:br1, bc0:bc1]
                delta += (self.cfg.pixel_weight / len(self.scales)
                          * (diff2.sum() - old.sum()) / self.numels[si])
                if commit:
                    self.contribs[si][br0:br1, bc0:bc1] = diff2
        if self.use_edge:
            lum_region = _luminance(region)
            # magnitudes change on the 1-dilation of the edit; recomputing them
            # needs luminance on the 2-dilation (Sobel support is one pixel)
            sr0, sr1 = max(r0 - 2, 0), min(r1 + 2, h)
            sc0, sc1 = max(c0 - 2, 0), min(c1 + 2, w)
            dr0, dr1 = max(r0 - 1, 0), min(r1 + 1, h)
            dc0, dc1 = max(c0 - 1, 0), min(c1 + 1, w)
            lum_ext = self.lum[sr0:sr1, sc0:sc1].copy()
            lum_ext[r0 - sr0:r1 - sr0, c0 - sc0:c1 - sc0] = lum_region
            mag = _sobel_mag(lum_ext)[dr0 - sr0:dr1 - sr0, dc0 - sc0:dc1 - sc0]
            e = (mag - self.target_mag[dr0:dr1, dc0:dc1]) ** 2
            if w_region is not None:
                extw = self.wmap[dr0:dr1, dc0:dc1].copy()
                extw[r0 - dr0:r1 - dr0, c0 - dc0:c1 - dc0] = w_region
                e = extw * e
            elif self.wmap is not None:
                e = self.wmap[dr0:dr1, dc0:dc1] * e
            old = self.edge_contrib[dr0:dr1, dc0:dc1]
            delta += self.cfg.edge_weight * (e.sum() - old.sum()) / (h * w)
            if commit:
                self.edge_contrib[dr0:dr1, dc0:dc1] = e
                self.lum[r0:r1, c0:c1] = lum_region
        if commit:
            self.pixels[r0:r1, c0:c1] = region
            if w_region is not None:
                self.wmap[r0:r1, c0:c1] = w_region
            self.loss = float(self.loss + delta)
            return self.loss
        return float(self.loss + delta)


# -- candidate sampling -----------------------------------------------------

# log-uniform range of the window (fraction of min dim) used to estimate the
# local orientation of the error mass around an anchor
_MOMENT_WINDOW = (0.04, 0.25)
_HALF_LEN_RANGE = (0.015, 0.45)


class _MomentTable:
    """Integral images of the error mass and its first/second moments.

    Makes the windowed principal-axis query used by candidate sampling O(1),
    so ridge walks can re-estimate direction at every step cheaply.
    """

    def __init__(self, err: np.ndarray):
        self.h, self.w = err.shape
        xs = np.arange(self.w, dtype=np.float64)[None, :]
        ys = np.arange(self.h, dtype=np.float64)[:, None]
        self.s = self._sat(err)
        self.sx = self._sat(err * xs)
        self.sy = self._sat(err * ys)
        self.sxx = self._sat(err * xs * xs)
        self.syy = self._sat(err * ys * ys)
        self.sxy = self._sat(err * xs * ys)

    @staticmethod
    def _sat(arr: np.ndarray) -> np.ndarray:
        return np.pad(arr.cumsum(axis=0).cumsum(axis=1), ((1, 0), (1, 0)))

    def _window_sum(self, table, r0, r1, c0, c1) -> float:
        return float(table[r1, c1] - table[r0, c1] - table[r1, c0] + table[r0, c0])

    def axis(self, row: int, col: int, half_px: int):
        """Principal direction, full extents along/across it (pixels), and the
        mass centroid of the window centered at (row, col); None if massless.
        A uniform bar of length L has variance L^2/12 along its axis."""
        r0, r1 = max(row - half_px, 0), min(row + half_px + 1, self.h)
        c0, c1 = max(col - half_px, 0), min(col + half_px + 1, self.w)
        total = self._window_sum(self.s, r0, r1, c0, c1)
        if total <= 1e-12:
            return None
        mx = self._window_sum(self.sx, r0, r1, c0, c1) / total
        my = self._window_sum(self.sy, r0, r1, c0, c1) / total
        cxx = max(self._window_sum(self.sxx, r0, r1, c0, c1) / total - mx * mx, 0.0)
        cyy = max(self._window_sum(self.syy, r0, r1, c0, c1) / total - my * my, 0.0)
        cxy = self._window_sum(self.sxy, r0, r1, c0, c1) / total - mx * my
        half_trace = 0.5 * (cxx + cyy)
        root = np.hypot(0.5 * (cxx - cyy), cxy)
        lam_max = half_trace + root
        lam_min = max(half_trace - root, 0.0)
        vx, vy = cxy, lam_max - cxx
        norm = np.hypot(vx, vy)
        if norm <= 1e-12:
            direction = np.array([1.0, 0.0])
        else:
            direction = np.array([vx / norm, vy / norm])
        return (direction, float(np.sqrt(max(12.0 * lam_max, 0.0))),
                float(np.sqrt(12.0 * lam_min)), (mx, my))


def _walk_ridge(err_hit: np.ndarray, mt: _MomentTable, start: tuple[float, float],
                d0: np.ndarray, max_len_px: float, gap_px: int = 3,
                step_px: float = 2.0) -> list[tuple[float, float]]:
    """Trace the error mass from ``start`` along ``d0``, re-estimating the
    direction from local moments at every step so the path follows curved
    structures. ``err_hit`` should be a 1px-dilated error field so a step
    landing just beside a thin structure still registers; the walk also
    recenters laterally onto the local mass centroid. Stops at a ``gap_px``
    run of near-zero error, at the image border, or after ``max_len_px``.
    Returns the visited points (pixels)."""
    h, w = err_hit.shape
    pts = []
    pos = np.array(start, dtype=np.float64)
    d = np.array(d0, dtype=np.float64)
    run = 0.0
    traveled = 0.0
    while traveled < max_len_px:
        pos = pos + d * step_px
        traveled += step_px
        i, j = int(pos[0]), int(pos[1])
        if not (0 <= i < w and 0 <= j < h):
            break
        if err_hit[j, i] > 0.05:
            run = 0.0
            pts.append((pos[0], pos[1]))
        else:
            run += step_px
            if run >= gap_px:
                break
            pts.append((pos[0], pos[1]))
        axis = mt.axis(j, i, 4)
        if axis is not None:
            nd = axis[0]
            if nd[0] * d[0] + nd[1] * d[1] < 0:
                nd = -nd
            # blend to damp jitter from the tiny window
            d = 0.6 * d + 0.4 * nd
            norm = np.hypot(d[0], d[1])
            if norm > 1e-12:
                d = d / norm
            # pull the walk back onto the ridge centerline (lateral part only)
            off = np.array([axis[3][0] - pos[0], axis[3][1] - pos[1]])
            along = off[0] * d[0] + off[1] * d[1]
            pos = pos + 0.5 * (off - along * d)
    # drop the trailing low-error run
    while pts:
        i, j = int(pts[-1][0]), int(pts[-1][1])
        if err_hit[j, i] > 0.05:
            break
        pts.pop()
    return pts


def _fit_quadratic(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares quadratic Bezier through a polyline: endpoints anchored,
    the middle control point solved in closed form under chord-length
    parameterization."""
    p0 = points[0]
    p2 = points[-1]
    if len(points) == 2:
        return p0, 0.5 * (p0 + p2), p2
    seg = np.diff(points, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    if cum[-1] <= 0:
        return p0, 0.5 * (p0 + p2), p2
    t = cum / cum[-1]
    b0 = (1 - t) ** 2
    b1 = 2 * t * (1 - t)
    b2 = t ** 2
    denom = float(np.sum(b1 * b1))
    if denom <= 1e-12:
        return p0, 0.5 * (p0 + p2), p2
    p1 = (points - np.outer(b0, p0) - np.outer(b2, p2)).T @ b1 / denom
    return p0, p1, p2


def _trim_half_extents(err: np.ndarray, anchor_px: tuple[float, float],
                       d: np.ndarray, max_half_px: float,
                       gap_px: int = 3) -> tuple[float, float]:
    """Walk from the anchor along +/- d and stop where the error mass runs out.

    Returns half-lengths (pixels) in the -d and +d directions, clipped at the
    first ``gap_px``-long run of near-zero error, so candidates do not bridge
    blank gaps between disjoint error regions (marker overshoot is permanent).
    Callers pass a dilated error field for tolerance to 1px drift.
    """
    h, w = err.shape
    out = []
    for sign in (-1.0, 1.0):
        run = 0
        reach = 0
        limit = int(max_half_px)
        for t in range(1, limit + 1):
            x = anchor_px[0] + sign * d[0] * t
            y = anchor_px[1] + sign * d[1] * t
            i, j = int(x), int(y)
            if not (0 <= i < w and 0 <= j < h):
                break
            if err[j, i] > 0.05:
                run = 0
                reach = t
            else:
                run += 1
                if run >= gap_px:
                    break
        out.append(float(max(reach, 1)))
    return out[0], out[1]


def _footprint_mean(target: np.ndarray, stroke: StrokeParams) -> np.ndarray:
    """Mean target color under a coarse sampling of the stroke footprint."""
    h, w = target.shape[:2]
    pts = bezier_points(stroke, np.linspace(0.0, 1.0, 5))
    pts_px = pts * np.array([w, h], dtype=np.float64)
    radius = stroke.width * h / 2.0
    chunks = []
    for cx, cy in pts_px:
        c0 = max(int(np.floor(cx - radius - 0.5)), 0)
        c1 = min(int(np.ceil(cx + radius + 0.5)) + 1, w)
        r0 = max(int(np.floor(cy - radius - 0.5)), 0)
        r1 = min(int(np.ceil(cy + radius + 0.5)) + 1, h)
        if c0 >= c1 or r0 >= r1:
            continue
        ys = np.arange(r0, r1, dtype=np.float64)[:, None] + 0.5 - cy
        xs = np.arange(c0, c1, dtype=np.float64)[None, :] + 0.5 - cx
        mask = (xs * xs + ys * ys) <= radius * radius
        if mask.any():
            chunks.append(target[r0:r1, c0:c1][mask])
    if not chunks:
        j = min(max(int(pts_px[2][1]), 0), h - 1)
        i = min(max(int(pts_px[2][0]), 0), w - 1)
        return target[j, i]
    return np.concatenate(chunks, axis=0).mean(axis=0)


def _sample_candidates(rng: np.random.Generator, count: int, target: np.ndarray,
                       pixels: np.ndarray, setting: PaintingSetting) -> list[StrokeParams]:
    """Random valid strokes, anchored where canvas/target disagreement is largest.

    Anchors are drawn proportionally to per-pixel L1 error mass, widths
    log-uniformly across the brush range, colors as the palette entry nearest
    the mean target color under the candidate footprint.
    """
    h, w = target.shape[:2]
    err2d = np.abs(target - pixels).sum(axis=2)
    err = err2d.ravel()
    total = float(err.sum())
    if total > 0.0:
        cdf = np.cumsum(err)
        cdf /= cdf[-1]
    else:
        cdf = None
    brush = setting.brush
    log_lo, log_hi = np.log(brush.min_width), np.log(brush.max_width)
    log_win_lo, log_win_hi = np.log(_MOMENT_WINDOW[0]), np.log(_MOMENT_WINDOW[1])
    marker = setting.media == MEDIA_MARKER
    scale = np.array([w, h], dtype=np.float64)
    mt = _MomentTable(err2d)
    err_hit = ndimage.maximum_filter(err2d, size=3, mode="constant")
    out = []
    for _ in range(count):
        if cdf is None:
            flat = int(rng.integers(h * w))
        else:
            flat = min(int(np.searchsorted(cdf, rng.random(), side="right")), h * w - 1)
        ay, ax = divmod(flat, w)
        anchor = np.array([(ax + 0.5) / w, (ay + 0.5) / h])
        win_frac = float(np.exp(rng.uniform(log_win_lo, log_win_hi)))
        half_px = max(int(win_frac * min(h, w)), 2)
        axis = mt.axis(ay, ax, half_px)
        jitter = float(rng.normal(0.0, 0.2))
        thickness = None
        anchor_px = (anchor[0] * w, anchor[1] * h)
        if axis is None:
            theta = rng.uniform(0.0, 2.0 * np.pi)
            d = np.array([np.cos(theta), np.sin(theta)])
        else:
            dpx, _extent_px, across_px, centroid = axis
            cosj, sinj = np.cos(jitter), np.sin(jitter)
            d = np.array([dpx[0] * cosj - dpx[1] * sinj,
                          dpx[0] * sinj + dpx[1] * cosj])
            thickness = across_px / h
            # recenter onto the local mass centroid when it stays nearby;
            # thin structures then get centerline-aligned candidates
            if np.hypot(centroid[0] - anchor_px[0],
                        centroid[1] - anchor_px[1]) <= 0.5 * half_px:
                anchor_px = centroid
                anchor = np.array([centroid[0] / w, centroid[1] / h])
        norm_div = float(min(h, w))
        p0 = p1 = p2 = None
        if axis is not None and rng.random() < 0.65:
            # follow the curved ridge of the error mass and fit a Bezier to it
            cap = _HALF_LEN_RANGE[1] * norm_div
            back = _walk_ridge(err_hit, mt, anchor_px, -d, cap)
            fwd = _walk_ridge(err_hit, mt, anchor_px, d, cap)
            poly = list(reversed(back)) + [tuple(anchor_px)] + list(fwd)
            if len(poly) >= 2:
                q0, q1, q2 = _fit_quadratic(np.asarray(poly, dtype=np.float64))
                p0 = np.clip(q0 / scale, 0.0, 1.0)
                p1 = np.clip(q1 / scale, 0.0, 1.0)
                p2 = np.clip(q2 / scale, 0.0, 1.0)
        if p0 is None:
            # straight arms clipped at the first gap in the error mass along
            # the axis; bridging gaps is unfixable under marker irreversibility
            back_px, fwd_px = _trim_half_extents(
                err_hit, anchor_px, d, _HALF_LEN_RANGE[1] * norm_div)
            shrink = float(rng.uniform(0.8, 1.0))
            half_back = min(max(back_px * shrink / norm_div, _HALF_LEN_RANGE[0]),
                            _HALF_LEN_RANGE[1])
            half_fwd = min(max(fwd_px * shrink / norm_div, _HALF_LEN_RANGE[0]),
                           _HALF_LEN_RANGE[1])
            bend = float(rng.normal(0.0, 0.15)) * 0.5 * (half_back + half_fwd)
            perp = np.array([-d[1], d[0]])
            p0 = np.clip(anchor - d * half_back, 0.0, 1.0)
            p2 = np.clip(anchor + d * half_fwd, 0.0, 1.0)
            p1 = np.clip(anchor + perp * bend, 0.0, 1.0)
        # widths follow the across-axis thickness of the error mass when it is
        # informative, shaded low because overshoot is unfixable under marker
        # compositing; a log-uniform fraction keeps exploring the brush range
        explore = rng.random()
        if thickness is None or explore < 0.1:
            width = float(np.exp(rng.uniform(log_lo, log_hi)))
        else:
            width = thickness * float(rng.uniform(0.5, 1.0))
        width = min(max(width, brush.min_width), brush.max_width)
        if marker:
            color_index, opacity = 0, 1.0
        else:
            opacity = float(rng.uniform(0.5, 1.0))
            color_index = 0
        stroke = StrokeParams(tuple(p0), tuple(p1), tuple(p2), width, color_index, opacity)
        if not marker:
            stroke = replace(stroke, color_index=setting.palette.nearest_index(
                _footprint_mean(target, stroke)))
        out.append(stroke)
    return out


# -- planning ---------------------------------------------------------------

def plan_strokes(target: np.ndarray, current: Canvas, setting: PaintingSetting,
                 cfg: PlannerConfig | None = None, loss_cfg: LossConfig | None = None,
                 source_tag: str = "planner") -> StrokePlan:
    """Greedy budgeted stroke plan lowering compute_loss toward the target.

    Every accepted stroke strictly decreases the loss; the first slot whose
    best candidate fails to improve ends the search early, then refinement
    runs. The rendered plan never scores worse than the starting canvas.
    """
    cfg = cfg or PlannerConfig()
    loss_cfg = loss_cfg or LossConfig()
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.shape != current.pixels.shape:
        raise DimensionMismatchError(
            f"target {tgt.shape} vs canvas {current.pixels.shape}")
    h, w = tgt.shape[:2]
    spacing = setting.brush.stamp_spacing
    opaque = setting.brush.blend_mode == "opaque_marker"
    palette_arr = setting.palette.as_array()
    ev = _LossEvaluator(tgt, loss_cfg, reference=current)
    ev.reset(current.pixels)
    rng = np.random.default_rng([_PLAN_STREAM, cfg.seed])
    strokes: list[StrokeParams] = []
    for _slot in range(setting.stroke_budget):
        candidates = _sample_candidates(rng, cfg.candidates_per_stroke, tgt,
                                        ev.pixels, setting)
        best_loss = ev.loss
        best: tuple[StrokeParams, np.ndarray, tuple[int, int, int, int]] | None = None
        for cand in candidates:
            geom = stamp_geometry(cand, w, h, spacing)
            bbox = geometry_bbox(geom, w, h)
            if bbox is None:
                continue
            r0, r1, c0, c1 = bbox
            region = ev.pixels[r0:r1, c0:c1].copy()
            paint_geometry(region, None, geom, palette_arr[cand.color_index],
                           cand.opacity, opaque, 0, origin=(r0, c0))
            cand_loss = ev.eval_region(region, bbox)
            if cand_loss < best_loss:
                best_loss = cand_loss
                best = (cand, region, bbox)
        if best is None:
            break
        ev.commit_region(best[1], best[2])
        strokes.append(best[0])
    plan = StrokePlan(strokes=strokes, setting=setting, seed=cfg.seed,
                      source_tag=source_tag)
    if cfg.refine_iters > 0 and strokes:
        plan = refine_plan(plan, tgt, current, cfg, loss_cfg)
    return plan


_POINT_FIELDS = (("p0", 0), ("p0", 1), ("p1", 0), ("p1", 1), ("p2", 0), ("p2", 1))
# joint moves of all three control points; these unstick whole-stroke
# misalignments that no single-field move can improve through
_TRANSLATE_FIELDS = (("translate", 0), ("translate", 1))


def _perturb(stroke: StrokeParams, field, delta: float,
             setting: PaintingSetting) -> StrokeParams | None:
    """Shifted copy of one continuous field, clamped to validity; None if no-op."""
    if field == "width":
        v = min(max(stroke.width + delta, setting.brush.min_width),
                setting.brush.max_width)
        return None if v == stroke.width else replace(stroke, width=v)
    if field == "opacity":
        v = min(max(stroke.opacity + delta, 1e-3), 1.0)
        return None if v == stroke.opacity else replace(stroke, opacity=v)
    name, axis = field
    if name == "translate":
        moved = {}
        for pname in ("p0", "p1", "p2"):
            pt = list(getattr(stroke, pname))
            pt[axis] = min(max(pt[axis] + delta, 0.0), 1.0)
            moved[pname] = tuple(pt)
        if all(moved[p] == getattr(stroke, p) for p in moved):
            return None
        return replace(stroke, **moved)
    pt = list(getattr(stroke, name))
    v = min(max(pt[axis] + delta, 0.0), 1.0)
    if v == pt[axis]:
        return None
    pt[axis] = v
    return replace(stroke, **{name: tuple(pt)})


def refine_plan(plan: StrokePlan, target: np.ndarray, base: Canvas,
                cfg: PlannerConfig | None = None,
                loss_cfg: LossConfig | None = None) -> StrokePlan:
    """Coordinate-descent polish of a plan's continuous stroke fields.

    For each round, strokes are visited in a seeded order and each field is
    tried at +/- the current step; only strict loss improvements are kept.
    The step halves after a round with no acceptance. Stroke count never
    changes and the output loss never exceeds the input loss.
    """
    cfg = cfg or PlannerConfig()
    loss_cfg = loss_cfg or LossConfig()
    if cfg.refine_iters <= 0 or not plan.strokes:
        return plan
    tgt = np.asarray(target, dtype=np.float64)
    if tgt.shape != base.pixels.shape:
        raise DimensionMismatchError(
            f"target {tgt.shape} vs canvas {base.pixels.shape}")
    h, w = tgt.shape[:2]
    setting = plan.setting
    spacing = setting.brush.stamp_spacing
    strokes = list(plan.strokes)
    geoms = [stamp_geometry(s, w, h, spacing) for s in strokes]
    bboxes = [geometry_bbox(g, w, h) for g in geoms]
    pixels = base.pixels.copy()
    opaque = setting.brush.blend_mode == "opaque_marker"
    palette_arr = setting.palette.as_array()
    for stroke, geom in zip(strokes, geoms):
        paint_geometry(pixels, None, geom, palette_arr[stroke.color_index],
                       stroke.opacity, opaque, 0)
    ev = _LossEvaluator(tgt, loss_cfg, reference=base)
    ev.reset(pixels)
    fields: list = list(_TRANSLATE_FIELDS) + list(_POINT_FIELDS) + ["width"]
    if setting.media != MEDIA_MARKER:
        fields.append("opacity")
    rng = np.random.default_rng([_REFINE_STREAM, cfg.seed])
    step = cfg.refine_step
    for _round in range(cfg.refine_iters):
        improved = False
        for si in rng.permutation(len(strokes)):
            si = int(si)
            for field in fields:
                current_loss = ev.loss
                best = None
                for sign in (1.0, -1.0):
                    cand = _perturb(strokes[si], field, sign * step, setting)
                    if cand is None:
                        continue
                    ng = stamp_geometry(cand, w, h, spacing)
                    nb = geometry_bbox(ng, w, h)
                    rects = [b for b in (bboxes[si], nb) if b is not None]
                    if not rects:
                        continue
                    union = (min(b[0] for b in rects), max(b[1] for b in rects),
                             min(b[2] for b in rects), max(b[3] for b in rects))
                    old = (strokes[si], bboxes[si], geoms[si])
                    strokes[si], bboxes[si], geoms[si] = cand, nb, ng
                    region = composite_region(base.pixels, strokes, setting,
                                              union, bboxes, geoms)
                    strokes[si], bboxes[si], geoms[si] = old
                    cand_loss = ev.eval_region(region, union)
                    if cand_loss < current_loss and (best is None or cand_loss < best[0]):
                        best = (cand_loss, cand, nb, ng, region, union)
                if best is not None:
                    _, cand, nb, ng, region, union = best
                    ev.commit_region(region, union)
                    strokes[si], bboxes[si], geoms[si] = cand, nb, ng
                    improved = True
        if not improved:
            step *= 0.5
            if step < _MIN_REFINE_STEP:
                break
    return StrokePlan(strokes=strokes, setting=setting, seed=plan.seed,
                      source_tag=plan.source_tag)
