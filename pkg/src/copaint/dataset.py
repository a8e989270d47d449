"""Self-supervised training-pair manufacture.

Each source image is simulated as a full stroke painting, strokes are removed
by one of four strategies to form a partial painting, low-quality sources are
filtered by embedding similarity, and the kept (partial, full, caption)
triplets are exported as an image-folder dataset with a JSONL manifest.

Items are processed independently and seeded by a stable hash of
(run seed, item id), so serial and parallel runs produce byte-identical
output.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ImageDecodeError, ProviderError, StrategyParameterError
from .metrics import EmbeddingProvider, delta_sem
from .palette import derive_palette
from .planner import LossConfig, PlannerConfig, plan_strokes
from .pngio import encode_png, load_image, resize_letterbox
from .render import render_plan
from .types import Canvas, PaintingSetting, StrokePlan
from .vision import saliency_map, salient_region_mask, segment_regions

log = logging.getLogger(__name__)

_PARTIAL_STREAM = 0x70617274

KIND_ALL = "remove_all"
KIND_RANDOM = "remove_random"
KIND_SALIENT = "remove_salient"
KIND_SEMANTIC = "remove_semantic"
STRATEGY_KINDS = (KIND_ALL, KIND_RANDOM, KIND_SALIENT, KIND_SEMANTIC)

DEFAULT_FILTER_THRESHOLD = 0.5
DEFAULT_REGION_QUANTILE = 0.25


def stable_hash64(*parts) -> int:
    """Deterministic 63-bit hash, stable across processes and runs."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "big") & (2 ** 63 - 1)


@dataclass(frozen=True)
class RemovalStrategy:
    """How to carve a partial painting out of a full plan.

    Parameters must match the kind: ``fraction`` only for remove_random,
    ``region_quantile`` only for remove_salient, ``region_index`` (rank of the
    region by size, 0 = largest) only for remove_semantic.
    """

    kind: str
    fraction: float | None = None
    region_quantile: float | None = None
    region_index: int | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise StrategyParameterError(f"unknown strategy kind {self.kind!r}")
        allowed = {
            KIND_ALL: (),
            KIND_RANDOM: ("fraction",),
            KIND_SALIENT: ("region_quantile",),
            KIND_SEMANTIC: ("region_index",),
        }[self.kind]
        for name in ("fraction", "region_quantile", "region_index"):
            value = getattr(self, name)
            if value is not None and name not in allowed:
                raise StrategyParameterError(
                    f"{self.kind} does not take parameter {name!r}")
        if self.kind == KIND_RANDOM:
            if self.fraction is None or not (0.0 <= self.fraction <= 1.0):
                raise StrategyParameterError(
                    f"remove_random needs fraction in [0,1], got {self.fraction}")
        if self.kind == KIND_SALIENT:
            q = DEFAULT_REGION_QUANTILE if self.region_quantile is None else self.region_quantile
            if not (0.0 < q < 1.0):
                raise StrategyParameterError(
                    f"remove_salient needs region_quantile in (0,1), got {q}")
            object.__setattr__(self, "region_quantile", q)
        if self.kind == KIND_SEMANTIC:
            idx = 0 if self.region_index is None else int(self.region_index)
            if idx < 0:
                raise StrategyParameterError("region_index must be >= 0")
            object.__setattr__(self, "region_index", idx)

    def to_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"kind": self.kind}
        for name in ("fraction", "region_quantile", "region_index"):
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        return obj

    @classmethod
    def from_obj(cls, obj: dict[str, Any]) -> "RemovalStrategy":
        return cls(kind=obj["kind"], fraction=obj.get("fraction"),
                   region_quantile=obj.get("region_quantile"),
                   region_index=obj.get("region_index"))


def remove_all() -> RemovalStrategy:
    return RemovalStrategy(kind=KIND_ALL)


def remove_random(fraction: float) -> RemovalStrategy:
    return RemovalStrategy(kind=KIND_RANDOM, fraction=fraction)


def remove_salient(region_quantile: float = DEFAULT_REGION_QUANTILE) -> RemovalStrategy:
    return RemovalStrategy(kind=KIND_SALIENT, region_quantile=region_quantile)


def remove_semantic(region_index: int = 0) -> RemovalStrategy:
    return RemovalStrategy(kind=KIND_SEMANTIC, region_index=region_index)


@dataclass
class SourceItem:
    id: str
    image: np.ndarray
    caption: str = ""


@dataclass
class TrainingPair:
    partial_image: np.ndarray
    full_image: np.ndarray
    caption: str
    strategy: RemovalStrategy
    source_id: str
    kept: bool
    score: float | None


@dataclass(frozen=True)
class FilterResult:
    keep: bool
    score: float | None
    undecided: bool = False


def simulate_full(source: SourceItem, setting: PaintingSetting,
                  planner_cfg: PlannerConfig | None = None,
                  loss_cfg: LossConfig | None = None,
                  width_px: int = 256, height_px: int = 256) -> tuple[StrokePlan, Canvas]:
    """Plan and render a full painting of the source image from a blank canvas.

    Adaptive media first derive a per-painting palette from the (resized)
    source; the returned plan carries that palette in its setting.
    """
    target = resize_letterbox(source.image, width_px, height_px)
    setting = setting.with_palette(derive_palette(target, setting))
    blank = Canvas.blank(width_px, height_px)
    plan = plan_strokes(target, blank, setting, planner_cfg, loss_cfg,
                        source_tag=f"simulate:{source.id}")
    return plan, render_plan(plan, blank, "robot")


def _midpoint_indices(plan: StrokePlan, shape: tuple[int, int]) -> list[tuple[int, int]]:
    h, w = shape
    out = []
    for stroke in plan.strokes:
        x, y = stroke.midpoint()
        out.append((min(max(int(y * h), 0), h - 1), min(max(int(x * w), 0), w - 1)))
    return out


def make_partial(plan: StrokePlan, strategy: RemovalStrategy,
                 source_image: np.ndarray, seed: int) -> StrokePlan:
    """Order-preserving stroke subset of ``plan`` per the removal strategy.

    Region membership of a stroke is decided by its path midpoint. The
    random strategy drops round(fraction * n) strokes (ties round up),
    chosen uniformly under the seed.
    """
    n = len(plan.strokes)
    if n == 0 and strategy.kind != KIND_ALL:
        raise ValueError(f"cannot apply {strategy.kind} to an empty plan")
    tag = f"{plan.source_tag}|partial:{strategy.kind}"
    if strategy.kind == KIND_ALL:
        return plan.subset([], source_tag=tag)
    if strategy.kind == KIND_RANDOM:
        drop_count = int(np.floor(strategy.fraction * n + 0.5))
        rng = np.random.default_rng([_PARTIAL_STREAM, seed])
        dropped = set(rng.choice(n, size=drop_count, replace=False).tolist())
        return plan.subset([i for i in range(n) if i not in dropped], source_tag=tag)
    img = np.asarray(source_image, dtype=np.float64)
    mids = _midpoint_indices(plan, img.shape[:2])
    if strategy.kind == KIND_SALIENT:
        region = salient_region_mask(saliency_map(img), strategy.region_quantile)
    else:
        labels = segment_regions(img)
        sizes = np.bincount(labels.ravel())
        order = np.lexsort((np.arange(len(sizes)), -sizes))
        pick = order[min(strategy.region_index, len(order) - 1)]
        region = labels == pick
    keep = [i for i, (r, c) in enumerate(mids) if not region[r, c]]
    return plan.subset(keep, source_tag=tag)


class TextImageScorer:
    """External image-text similarity service (the built-in embedding has no
    text tower). POST multipart {caption, image PNG} -> JSON {score}."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def score(self, image: np.ndarray, caption: str) -> float:
        import requests

        try:
            resp = requests.post(
                self.url,
                files={"image": ("image.png", encode_png(image), "image/png")},
                data={"caption": caption},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"text scorer {self.url}: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"text scorer {self.url}: HTTP {resp.status_code}")
        try:
            return float(resp.json()["score"])
        except Exception as exc:
            raise ProviderError(f"text scorer {self.url}: bad payload ({exc})") from exc


def filter_pair(full_canvas: Canvas, source: SourceItem,
                provider: EmbeddingProvider | TextImageScorer | None = None,
                threshold: float = DEFAULT_FILTER_THRESHOLD) -> FilterResult:
    """Keep a simulated painting iff its quality score reaches the threshold.

    With an embedding provider the score is 1 - delta_sem(painting, source
    image); with a text-capable scorer it is the service's image-text
    similarity against the caption. Provider failures mark the pair
    undecided (excluded from export) instead of guessing.
    """
    provider = provider or EmbeddingProvider()
    h, w = full_canvas.pixels.shape[:2]
    try:
        if isinstance(provider, TextImageScorer):
            score = provider.score(full_canvas.pixels, source.caption)
        else:
            reference = resize_letterbox(source.image, w, h)
            score = 1.0 - delta_sem(full_canvas.pixels, reference, provider)
    except ProviderError as exc:
        log.warning("filter undecided for %s: %s", source.id, exc)
        return FilterResult(keep=False, score=None, undecided=True)
    return FilterResult(keep=bool(score >= threshold), score=float(score))


def export_dataset(pairs: Sequence[TrainingPair], out_dir) -> Path:
    """Write kept pairs as partial/NNNN.png + full/NNNN.png + manifest.jsonl.

    Only kept pairs are indexed; the manifest line count equals the kept
    count. The manifest is written last via an atomic rename, and any files
    created before a failure are removed so no dangling entries remain.
    """
    out = Path(out_dir)
    partial_dir = out / "partial"
    full_dir = out / "full"
    partial_dir.mkdir(parents=True, exist_ok=True)
    full_dir.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    written: list[Path] = []
    lines: list[str] = []
    try:
        index = 0
        for pair in pairs:
            if not pair.kept:
                continue
            name = f"{index:04d}.png"
            ppath = partial_dir / name
            fpath = full_dir / name
            ppath.write_bytes(encode_png(pair.partial_image))
            written.append(ppath)
            fpath.write_bytes(encode_png(pair.full_image))
            written.append(fpath)
            lines.append(json.dumps({
                "id": f"{pair.source_id}--{pair.strategy.kind}",
                "source_id": pair.source_id,
                "caption": pair.caption,
                "strategy": pair.strategy.to_obj(),
                "kept": pair.kept,
                "score": pair.score,
                "partial_path": f"partial/{name}",
                "full_path": f"full/{name}",
            }))
            index += 1
        tmp = out / "manifest.jsonl.tmp"
        tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        os.replace(tmp, manifest)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        (out / "manifest.jsonl.tmp").unlink(missing_ok=True)
        raise
    return manifest


def read_manifest(path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_corpus(corpus_dir) -> list[SourceItem]:
    """Read a directory of images plus captions.jsonl ({id, file, caption})."""
    corpus = Path(corpus_dir)
    captions = corpus / "captions.jsonl"
    if not captions.exists():
        raise FileNotFoundError(f"{captions} not found (corpus needs captions.jsonl)")
    items: list[SourceItem] = []
    for line in captions.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        path = corpus / rec["file"]
        try:
            image = load_image(path)
        except (ImageDecodeError, FileNotFoundError) as exc:
            log.warning("skipping %s: %s", rec.get("id", rec["file"]), exc)
            continue
        items.append(SourceItem(id=str(rec["id"]), image=image,
                                caption=str(rec.get("caption", ""))))
    return items


def _process_item(args) -> list[TrainingPair]:
    (item, setting, planner_cfg, loss_cfg, strategies, threshold, seed,
     width_px, height_px, provider) = args
    item_seed = stable_hash64(seed, item.id)
    cfg = PlannerConfig(candidates_per_stroke=planner_cfg.candidates_per_stroke,
                        refine_iters=planner_cfg.refine_iters,
                        refine_step=planner_cfg.refine_step,
                        seed=item_seed)
    plan, full_canvas = simulate_full(item, setting, cfg, loss_cfg,
                                      width_px=width_px, height_px=height_px)
    verdict = filter_pair(full_canvas, item, provider, threshold)
    target = resize_letterbox(item.image, width_px, height_px)
    blank = Canvas.blank(width_px, height_px)
    pairs = []
    for strategy in strategies:
        partial_plan = make_partial(plan, strategy, target,
                                    seed=stable_hash64(item_seed, strategy.kind))
        partial_canvas = render_plan(partial_plan, blank, "robot")
        pairs.append(TrainingPair(
            partial_image=partial_canvas.pixels,
            full_image=full_canvas.pixels,
            caption=item.caption,
            strategy=strategy,
            source_id=item.id,
            kept=verdict.keep and not verdict.undecided,
            score=verdict.score,
        ))
    return pairs


def generate_dataset(corpus_dir, out_dir, setting: PaintingSetting,
                     strategies: Sequence[RemovalStrategy],
                     planner_cfg: PlannerConfig | None = None,
                     loss_cfg: LossConfig | None = None,
                     threshold: float = DEFAULT_FILTER_THRESHOLD,
                     seed: int = 0, workers: int = 1,
                     width_px: int = 256, height_px: int = 256,
                     provider: EmbeddingProvider | TextImageScorer | None = None,
                     ) -> Path:
    """Run the full pipeline over a corpus; returns the manifest path.

    Output bytes depend only on (corpus, configs, seed) -- worker count does
    not matter because every item is seeded independently and export order
    follows corpus order.
    """
    planner_cfg = planner_cfg or PlannerConfig()
    loss_cfg = loss_cfg or LossConfig()
    items = load_corpus(corpus_dir)
    argv = [(item, setting, planner_cfg, loss_cfg, tuple(strategies), threshold,
             seed, width_px, height_px, provider) for item in items]
    if workers > 1 and len(argv) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_item = list(pool.map(_process_item, argv))
    else:
        per_item = [_process_item(a) for a in argv]
    pairs = [pair for chunk in per_item for pair in chunk]
    return export_dataset(pairs, out_dir)


def parse_strategies(spec: str) -> list[RemovalStrategy]:
    """Parse a CLI strategy list like ``all,random:0.3,salient,semantic``."""
    out = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        name, _, arg = token.partition(":")
        if name == "all":
            out.append(remove_all())
        elif name == "random":
            out.append(remove_random(float(arg) if arg else 0.5))
        elif name == "salient":
            out.append(remove_salient(float(arg) if arg else DEFAULT_REGION_QUANTILE))
        elif name == "semantic":
            out.append(remove_semantic(int(arg) if arg else 0))
        else:
            raise StrategyParameterError(f"unknown strategy {name!r}")
    if not out:
        raise StrategyParameterError("no strategies given")
    return out
