"""Deterministic rasterization of parametric strokes onto canvases.

A stroke is drawn as a train of hard-edged circular stamps placed at equal
arc-length intervals along its quadratic Bezier path. Stamp diameter equals
the stroke width (a fraction of canvas height), spacing is
``stamp_spacing * diameter``. Two blend modes:

* ``opaque_marker``   -- new = min(old, color), channel-wise (monotone darkening)
* ``alpha_acrylic``   -- new = opacity * color + (1 - opacity) * old, per stamp

Normalized point (x, y) maps to continuous pixel coordinate (x*W, y*H);
the pixel at row j, column i has its center at (i + 0.5, j + 0.5). A pixel
belongs to a stamp iff its center lies within the stamp radius. Everything
here is pure float arithmetic with no randomness, so results are
bit-reproducible. Marker compositing is idempotent and order-free (min), so
the union of stamp discs is rasterized in one pass; alpha compositing must
stamp sequentially.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConstraintViolationError
from .types import (
    AUTHOR_CODES,
    AUTHOR_HUMAN,
    BLEND_MARKER,
    Canvas,
    PaintingSetting,
    StrokeParams,
    StrokePlan,
    Violation,
    validate_stroke,
)

# Segments used to tabulate arc length along the Bezier before placing stamps.
_ARC_SEGMENTS = 256

# Stamp chunk size for the vectorized union-of-discs mask.
_CHUNK = 32


class StampSet(NamedTuple):
    """Precomputed stamp train of one stroke on a specific raster size."""

    centers: np.ndarray  # (N, 2) continuous pixel coordinates (x, y)
    radius: float        # stamp radius in pixels


def bezier_points(stroke: StrokeParams, ts: np.ndarray) -> np.ndarray:
    """Evaluate the quadratic Bezier at parameters ``ts``; returns (N, 2) xy."""
    p = stroke.control_points()
    t = np.asarray(ts, dtype=np.float64)[:, None]
    return (1 - t) ** 2 * p[0] + 2 * t * (1 - t) * p[1] + t ** 2 * p[2]


def stamp_geometry(stroke: StrokeParams, width_px: int, height_px: int,
                   stamp_spacing: float) -> StampSet:
    """Stamp centers in continuous pixel coordinates plus the stamp radius.

    Centers start at t=0 and are spaced ``stamp_spacing * diameter`` apart in
    arc length, with the path endpoint always stamped. A degenerate path
    (zero length) yields a single stamp.
    """
    diameter_px = stroke.width * height_px
    radius = diameter_px / 2.0
    ts_grid = np.linspace(0.0, 1.0, _ARC_SEGMENTS + 1)
    pts_px = bezier_points(stroke, ts_grid) * np.array(
        [width_px, height_px], dtype=np.float64)
    seg = np.diff(pts_px, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    step = stamp_spacing * diameter_px
    if total <= 1e-12 or step <= 0.0:
        return StampSet(pts_px[:1].copy(), radius)
    dists = np.arange(0.0, total, step)
    if total - dists[-1] > 1e-9:
        dists = np.append(dists, total)
    ts = np.interp(dists, cum, ts_grid)
    centers = bezier_points(stroke, ts) * np.array(
        [width_px, height_px], dtype=np.float64)
    return StampSet(centers, radius)


def geometry_bbox(geom: StampSet, width_px: int, height_px: int,
                  pad: int = 0) -> tuple[int, int, int, int] | None:
    """Clipped half-open pixel rect (r0, r1, c0, c1) covering the stamp train."""
    c = geom.centers
    r = geom.radius
    c0 = int(np.floor(c[:, 0].min() - r - 0.5)) - pad
    c1 = int(np.ceil(c[:, 0].max() + r + 0.5)) + 1 + pad
    r0 = int(np.floor(c[:, 1].min() - r - 0.5)) - pad
    r1 = int(np.ceil(c[:, 1].max() + r + 0.5)) + 1 + pad
    r0, r1 = max(r0, 0), min(r1, height_px)
    c0, c1 = max(c0, 0), min(c1, width_px)
    if r0 >= r1 or c0 >= c1:
        return None
    return (r0, r1, c0, c1)


def stroke_bbox(stroke: StrokeParams, width_px: int, height_px: int,
                stamp_spacing: float, pad: int = 0) -> tuple[int, int, int, int] | None:
    geom = stamp_geometry(stroke, width_px, height_px, stamp_spacing)
    return geometry_bbox(geom, width_px, height_px, pad=pad)


def _disc_mask(geom: StampSet, window_h: int, window_w: int,
               row0: int, col0: int) -> np.ndarray:
    """Boolean union of stamp discs over a window whose top-left pixel is
    (row0, col0) in canvas coordinates. Stamps are processed in chunks so the
    broadcast stays small even for long thin strokes."""
    mask = np.zeros((window_h, window_w), dtype=bool)
    r = geom.radius
    r2 = r * r
    centers = geom.centers
    for start in range(0, len(centers), _CHUNK):
        chunk = centers[start:start + _CHUNK]
        cx = chunk[:, 0]
        cy = chunk[:, 1]
        lc0 = max(int(np.floor(cx.min() - r - 0.5)) - col0, 0)
        lc1 = min(int(np.ceil(cx.max() + r + 0.5)) + 1 - col0, window_w)
        lr0 = max(int(np.floor(cy.min() - r - 0.5)) - row0, 0)
        lr1 = min(int(np.ceil(cy.max() + r + 0.5)) + 1 - row0, window_h)
        if lc0 >= lc1 or lr0 >= lr1:
            continue
        ys = np.arange(lr0, lr1, dtype=np.float64)[None, :, None] + row0 + 0.5
        xs = np.arange(lc0, lc1, dtype=np.float64)[None, None, :] + col0 + 0.5
        d2 = (xs - cx[:, None, None]) ** 2 + (ys - cy[:, None, None]) ** 2
        mask[lr0:lr1, lc0:lc1] |= (d2 <= r2).any(axis=0)
    return mask


def paint_geometry(pixels: np.ndarray, authorship: np.ndarray | None,
                   geom: StampSet, color: np.ndarray, opacity: float,
                   opaque: bool, author_code: int,
                   origin: tuple[int, int] = (0, 0)) -> None:
    """Composite a precomputed stamp train in place onto ``pixels``.

    ``pixels`` may be the full canvas or a window whose top-left pixel sits at
    ``origin`` (row, col) of the canvas. Painting a window produces exactly
    the pixels the full-canvas composite would, because both blend modes are
    per-pixel.
    """
    h, w = pixels.shape[:2]
    row0, col0 = origin
    if opaque:
        mask = _disc_mask(geom, h, w, row0, col0)
        if not mask.any():
            return
        np.minimum(pixels, color, out=pixels, where=mask[:, :, None])
        if authorship is not None:
            authorship[mask & (authorship != AUTHOR_HUMAN)] = author_code
        return
    r = geom.radius
    r2 = r * r
    for cx, cy in geom.centers:
        lc0 = max(int(np.floor(cx - r - 0.5)) - col0, 0)
        lc1 = min(int(np.ceil(cx + r + 0.5)) + 1 - col0, w)
        lr0 = max(int(np.floor(cy - r - 0.5)) - row0, 0)
        lr1 = min(int(np.ceil(cy + r + 0.5)) + 1 - row0, h)
        if lc0 >= lc1 or lr0 >= lr1:
            continue
        ys = np.arange(lr0, lr1, dtype=np.float64)[:, None] + row0 + 0.5 - cy
        xs = np.arange(lc0, lc1, dtype=np.float64)[None, :] + col0 + 0.5 - cx
        mask = (xs * xs + ys * ys) <= r2
        if not mask.any():
            continue
        sub = pixels[lr0:lr1, lc0:lc1]
        np.copyto(sub, opacity * color + (1.0 - opacity) * sub,
                  where=mask[:, :, None])
        if authorship is not None:
            asub = authorship[lr0:lr1, lc0:lc1]
            asub[mask & (asub != AUTHOR_HUMAN)] = author_code


def paint_stroke_region(pixels: np.ndarray, authorship: np.ndarray | None,
                        stroke: StrokeParams, setting: PaintingSetting,
                        author_code: int, origin: tuple[int, int] = (0, 0),
                        full_size: tuple[int, int] | None = None,
                        geom: StampSet | None = None) -> None:
    """Composite one stroke in place; see :func:`paint_geometry`."""
    if full_size is None:
        full_h, full_w = pixels.shape[:2]
    else:
        full_h, full_w = full_size
    if geom is None:
        geom = stamp_geometry(stroke, full_w, full_h, setting.brush.stamp_spacing)
    color = np.asarray(setting.palette.colors[stroke.color_index], dtype=np.float64)
    paint_geometry(pixels, authorship, geom, color, stroke.opacity,
                   setting.brush.blend_mode == BLEND_MARKER, author_code,
                   origin=origin)


def _author_code(author: str) -> int:
    try:
        return AUTHOR_CODES[author]
    except KeyError:
        raise ConstraintViolationError(
            [Violation("author", f"author must be 'human' or 'robot', got {author!r}")]) from None


def render_stroke(canvas: Canvas, stroke: StrokeParams, setting: PaintingSetting,
                  author: str) -> Canvas:
    """Render one stroke onto a copy of the canvas; the input is untouched."""
    code = _author_code(author)
    violations = validate_stroke(stroke, setting)
    if violations:
        raise ConstraintViolationError(violations)
    out = canvas.copy()
    paint_stroke_region(out.pixels, out.authorship, stroke, setting, code)
    return out


def render_plan(plan: StrokePlan, base: Canvas, author: str) -> Canvas:
    """Sequential left-fold of render_stroke over the plan, from ``base``."""
    code = _author_code(author)
    out = base.copy()
    for i, stroke in enumerate(plan.strokes):
        violations = validate_stroke(stroke, plan.setting)
        if violations:
            raise ConstraintViolationError(
                [Violation(f"strokes[{i}].{v.field}", v.message) for v in violations])
        paint_stroke_region(out.pixels, out.authorship, stroke, plan.setting, code)
    return out


def composite_region(base_pixels: np.ndarray, strokes, setting: PaintingSetting,
                     bbox: tuple[int, int, int, int], bboxes, geoms) -> np.ndarray:
    """Pixels of ``bbox`` after compositing ``strokes`` onto ``base_pixels``.

    Equals the same window of a full render; used by the planner to re-fold
    only the part of the canvas a stroke edit can affect. ``bboxes`` and
    ``geoms`` carry per-stroke footprints/geometry so non-intersecting strokes
    are skipped cheaply.
    """
    r0, r1, c0, c1 = bbox
    region = base_pixels[r0:r1, c0:c1].copy()
    opaque = setting.brush.blend_mode == BLEND_MARKER
    palette = setting.palette
    for k, stroke in enumerate(strokes):
        sb = bboxes[k]
        if sb is None or sb[0] >= r1 or sb[1] <= r0 or sb[2] >= c1 or sb[3] <= c0:
            continue
        color = np.asarray(palette.colors[stroke.color_index], dtype=np.float64)
        paint_geometry(region, None, geoms[k], color, stroke.opacity, opaque, 0,
                       origin=(r0, c0))
    return region
