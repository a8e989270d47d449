"""Shared builders for test images, plans, and corpora."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from copaint.pngio import save_png
from copaint.types import Canvas, PaintingSetting, StrokeParams, StrokePlan


def random_marker_plan(seed: int, n_strokes: int, setting: PaintingSetting,
                       max_len: float = 0.35) -> StrokePlan:
    """Random valid marker plan: uniform anchors, log-uniform widths over the
    brush range, mild bends."""
    rng = np.random.default_rng(seed)
    brush = setting.brush
    strokes = []
    for _ in range(n_strokes):
        a = rng.random(2)
        ang = rng.uniform(0, 2 * np.pi)
        length = rng.uniform(0.05, max_len)
        d = np.array([np.cos(ang), np.sin(ang)])
        p0 = np.clip(a - d * length / 2, 0, 1)
        p2 = np.clip(a + d * length / 2, 0, 1)
        perp = np.array([-d[1], d[0]])
        p1 = np.clip(a + perp * rng.uniform(-0.1, 0.1), 0, 1)
        width = float(np.exp(rng.uniform(np.log(brush.min_width),
                                         np.log(brush.max_width))))
        strokes.append(StrokeParams(tuple(p0), tuple(p1), tuple(p2), width, 0, 1.0))
    return StrokePlan(strokes, setting, seed=seed, source_tag="test-truth")


def smooth_random_image(seed: int, size: int, sigma: float = 4.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = rng.random((size, size, 3))
    img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def detailed_source_image(size: int = 96) -> np.ndarray:
    """Colorful, textured image with no mass in the topmost color bins, so its
    built-in embedding shares nothing with a blank white canvas."""
    rng = np.random.default_rng(7)
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.zeros((size, size, 3))
    img[..., 0] = 0.1 + 0.6 * ((xx // 8 + yy // 8) % 2)
    img[..., 1] = 0.1 + 0.5 * (np.sin(xx / 5.0) * 0.5 + 0.5)
    img[..., 2] = 0.8 * rng.random((size, size))
    return img


def write_corpus(root: Path, images: dict[str, np.ndarray],
                 captions: dict[str, str] | None = None) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, img in images.items():
        save_png(img, root / f"{name}.png")
        lines.append(json.dumps({
            "id": name,
            "file": f"{name}.png",
            "caption": (captions or {}).get(name, f"test image {name}"),
        }))
    (root / "captions.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root


def canvas_from_pixels(pixels: np.ndarray) -> Canvas:
    h, w = pixels.shape[:2]
    canvas = Canvas.blank(w, h)
    canvas.pixels[:] = pixels
    return canvas
