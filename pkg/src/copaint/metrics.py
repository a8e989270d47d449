"""Pixel and semantic gap measures between proposed and painted images.

``delta_pix`` is the per-pixel mean squared error. ``delta_sem`` is the cosine
distance (1 - cosine similarity) between image embeddings from a pluggable
provider. The built-in provider is a fixed classical descriptor -- a 4x4
spatial grid of per-cell color and gradient-orientation histograms -- so every
metric here runs hermetically; an HTTP provider slots in for parity studies
against learned encoders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from .errors import DimensionMismatchError, ProviderError
from .pngio import encode_png

_GRID = 4
_COLOR_BINS = 8
_ORIENT_BINS = 8
EMBED_DIM = _GRID * _GRID * (3 * _COLOR_BINS + _ORIENT_BINS)

# Gradients weaker than one color-bin width are treated as flat; sub-bin pixel
# noise then cannot move any histogram count.
_GRAD_MIN = 1.0 / _COLOR_BINS


@dataclass(frozen=True)
class EmbeddingProvider:
    """Image -> unit-vector mapper; ``builtin`` or an HTTP endpoint."""

    kind: str = "builtin"
    url: str = ""
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("builtin", "http"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not self.url:
            raise ValueError("http provider requires a url")

    @classmethod
    def from_spec(cls, spec: str) -> "EmbeddingProvider":
        if spec == "builtin":
            return cls(kind="builtin")
        return cls(kind="http", url=spec)


def _luminance(img: np.ndarray) -> np.ndarray:
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _replicate_pad_gradients(lum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(lum, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return gx, gy


def _builtin_embedding(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    gx, gy = _replicate_pad_gradients(_luminance(img))
    mag = np.hypot(gx, gy)
    orient = np.arctan2(gy, gx)
    obins = np.minimum((orient + np.pi) / (2.0 * np.pi) * _ORIENT_BINS,
                       _ORIENT_BINS - 1).astype(np.intp)
    cbins = np.minimum((img * _COLOR_BINS).astype(np.intp), _COLOR_BINS - 1)
    row_edges = [int(round(i * h / _GRID)) for i in range(_GRID + 1)]
    col_edges = [int(round(j * w / _GRID)) for j in range(_GRID + 1)]
    feats = []
    for gi in range(_GRID):
        for gj in range(_GRID):
            r0, r1 = row_edges[gi], max(row_edges[gi + 1], row_edges[gi] + 1)
            c0, c1 = col_edges[gj], max(col_edges[gj + 1], col_edges[gj] + 1)
            r1, c1 = min(r1, h), min(c1, w)
            npix = max((r1 - r0) * (c1 - c0), 1)
            for ch in range(3):
                feats.append(np.bincount(cbins[r0:r1, c0:c1, ch].ravel(),
                                         minlength=_COLOR_BINS) / npix)
            strong = mag[r0:r1, c0:c1] >= _GRAD_MIN
            feats.append(np.bincount(obins[r0:r1, c0:c1][strong].ravel(),
                                     minlength=_ORIENT_BINS) / npix)
    vec = np.concatenate(feats)
    return vec / np.linalg.norm(vec)


def embed(image: np.ndarray, provider: EmbeddingProvider | None = None) -> np.ndarray:
    """Unit-norm embedding of an RGB image under the given provider."""
    provider = provider or EmbeddingProvider()
    if provider.kind == "builtin":
        return _builtin_embedding(image)
    import requests

    try:
        resp = requests.post(provider.url, data=encode_png(image),
                             headers={"Content-Type": "image/png"},
                             timeout=provider.timeout)
    except requests.RequestException as exc:
        raise ProviderError(f"embedding provider {provider.url}: {exc}") from exc
    if resp.status_code != 200:
        raise ProviderError(
            f"embedding provider {provider.url}: HTTP {resp.status_code}")
    try:
        vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
    except Exception as exc:
        raise ProviderError(
            f"embedding provider {provider.url}: bad payload ({exc})") from exc
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm <= 0:
        raise ProviderError(f"embedding provider {provider.url}: degenerate vector")
    return vec / norm


def delta_pix(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared pixel difference; 0 iff the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def delta_sem(a: np.ndarray, b: np.ndarray,
              provider: EmbeddingProvider | None = None) -> float:
    """Cosine distance between the images' embeddings (same provider for both)."""
    va = embed(a, provider)
    vb = embed(b, provider)
    return float(1.0 - np.dot(va, vb))


def _t_pdf(x: float, dof: int) -> float:
    logc = (math.lgamma((dof + 1) / 2.0) - math.lgamma(dof / 2.0)
            - 0.5 * math.log(dof * math.pi))
    return math.exp(logc - (dof + 1) / 2.0 * math.log1p(x * x / dof))


def _t_sf(t: float, dof: int) -> float:
    """Upper-tail probability of Student's t via adaptive quadrature."""
    val, _err = integrate.quad(_t_pdf, t, np.inf, args=(dof,),
                               epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def pearson(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson r and two-sided p-value (t-distribution, n-2 dof)."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance input")
    r = float(np.sum(dx * dy) / (sx * sy))
    r = min(1.0, max(-1.0, r))
    if 1.0 - r * r <= 0.0:
        return r, 0.0
    t = abs(r) * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * _t_sf(t, n - 2)
    return r, min(1.0, max(0.0, p))


@dataclass
class GapReport:
    """Per-pair gap rows plus aggregates and optional text-score correlations."""

    rows: list[dict[str, Any]]
    aggregates: dict[str, dict[str, float]]
    correlations: dict[str, Any] | None = None
    notes: list[str] = field(default_factory=list)

    def to_obj(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "aggregates": self.aggregates,
            "correlations": self.correlations,
            "notes": self.notes,
        }


def gap_report(pairs: Sequence[tuple[str, np.ndarray, np.ndarray]],
               provider: EmbeddingProvider | None = None,
               text_scores: dict[str, float] | None = None) -> GapReport:
    """Gap table over (id, image_a, image_b) pairs, assembled in id order.

    When per-id text scores are supplied, Pearson correlations of each gap
    column against the scores are appended; degenerate columns (zero variance
    or too few rows) omit the correlation and add an explanatory note.
    """
    if not pairs:
        raise ValueError("gap_report needs at least one pair")
    provider = provider or EmbeddingProvider()
    rows = []
    for pid, img_a, img_b in sorted(pairs, key=lambda p: str(p[0])):
        row = {
            "id": str(pid),
            "delta_pix": delta_pix(img_a, img_b),
            "delta_sem": delta_sem(img_a, img_b, provider),
        }
        if text_scores is not None and str(pid) in text_scores:
            row["text_score"] = float(text_scores[str(pid)])
        rows.append(row)
    aggregates = {}
    for col in ("delta_pix", "delta_sem", "text_score"):
        vals = [row[col] for row in rows if col in row]
        if vals:
            aggregates[col] = {
                "mean": float(np.mean(vals)),
                "median": float(np.median(vals)),
            }
    report = GapReport(rows=rows, aggregates=aggregates)
    if text_scores is not None:
        scored = [row for row in rows if "text_score" in row]
        correlations: dict[str, Any] = {}
        for col in ("delta_pix", "delta_sem"):
            key = f"{col}_vs_text"
            try:
                r, p = pearson([row[col] for row in scored],
                               [row["text_score"] for row in scored])
                correlations[key] = {"r": r, "p": p}
            except ValueError as exc:
                correlations[key] = None
                report.notes.append(f"{key}: correlation omitted ({exc})")
        report.correlations = correlations
    return report
