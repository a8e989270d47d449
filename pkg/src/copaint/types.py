"""Core value types: strokes, brushes, palettes, media settings, canvases, plans.

Stroke geometry lives in normalized [0,1]^2 coordinates so plans are
resolution independent; ``width`` is a fraction of canvas height.
Rasterization itself is in :mod:`copaint.render`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import ConstraintViolationError

PLAN_FORMAT_VERSION = 1

MEDIA_ACRYLIC_12 = "acrylic_12_adaptive"
MEDIA_ACRYLIC_4 = "acrylic_4_fixed"
MEDIA_MARKER = "marker_black"
MEDIA_KINDS = (MEDIA_ACRYLIC_12, MEDIA_ACRYLIC_4, MEDIA_MARKER)

BLEND_MARKER = "opaque_marker"
BLEND_ACRYLIC = "alpha_acrylic"
BLEND_MODES = (BLEND_MARKER, BLEND_ACRYLIC)

AUTHOR_BLANK = 0
AUTHOR_HUMAN = 1
AUTHOR_ROBOT = 2
AUTHOR_CODES = {"human": AUTHOR_HUMAN, "robot": AUTHOR_ROBOT}

BLACK = (0.0, 0.0, 0.0)

MAX_STROKE_WIDTH = 0.25
PALETTE_MERGE_DIST = 0.01  # centroids closer than this L2 distance collapse


class Violation(NamedTuple):
    field: str
    message: str


def _as_point(value) -> tuple[float, float]:
    x, y = value
    return (float(x), float(y))


@dataclass(frozen=True)
class StrokeParams:
    """One parametric brush stroke: a quadratic Bezier path plus media fields."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    p2: tuple[float, float]
    width: float
    color_index: int = 0
    opacity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p0", _as_point(self.p0))
        object.__setattr__(self, "p1", _as_point(self.p1))
        object.__setattr__(self, "p2", _as_point(self.p2))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "color_index", int(self.color_index))
        object.__setattr__(self, "opacity", float(self.opacity))

    def control_points(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2], dtype=np.float64)

    def midpoint(self) -> tuple[float, float]:
        """Bezier point at t=0.5; used for region-membership decisions."""
        x = 0.25 * self.p0[0] + 0.5 * self.p1[0] + 0.25 * self.p2[0]
        y = 0.25 * self.p0[1] + 0.5 * self.p1[1] + 0.25 * self.p2[1]
        return (x, y)


@dataclass(frozen=True)
class BrushProfile:
    """Physical brush envelope: width range, stamp spacing, blend behavior."""

    min_width: float
    max_width: float
    stamp_spacing: float = 0.4
    blend_mode: str = BLEND_ACRYLIC

    def __post_init__(self):
        bad = []
        if not (0.0 < self.min_width <= self.max_width <= MAX_STROKE_WIDTH):
            bad.append(Violation("min_width/max_width",
                                 f"need 0 < min <= max <= {MAX_STROKE_WIDTH}, "
                                 f"got ({self.min_width}, {self.max_width})"))
        if not (0.0 < self.stamp_spacing <= 1.0):
            bad.append(Violation("stamp_spacing", f"must be in (0, 1], got {self.stamp_spacing}"))
        if self.blend_mode not in BLEND_MODES:
            bad.append(Violation("blend_mode", f"unknown blend mode {self.blend_mode!r}"))
        if bad:
            raise ConstraintViolationError(bad)


@dataclass(frozen=True)
class Palette:
    """Ordered list of RGB colors, channels in [0,1]."""

    colors: tuple[tuple[float, float, float], ...]
    fixed: bool = True

    def __post_init__(self):
        colors = tuple(tuple(float(c) for c in col) for col in self.colors)
        object.__setattr__(self, "colors", colors)
        bad = []
        if not (1 <= len(colors) <= 12):
            bad.append(Violation("colors", f"palette size must be 1..12, got {len(colors)}"))
        if len(set(colors)) != len(colors):
            bad.append(Violation("colors", "duplicate colors in palette"))
        for col in colors:
            if len(col) != 3 or any(not (0.0 <= c <= 1.0) for c in col):
                bad.append(Violation("colors", f"color out of range: {col}"))
                break
        if bad:
            raise ConstraintViolationError(bad)

    def __len__(self) -> int:
        return len(self.colors)

    def as_array(self) -> np.ndarray:
        return np.array(self.colors, dtype=np.float64)

    def nearest_index(self, rgb) -> int:
        d = np.sum((self.as_array() - np.asarray(rgb, dtype=np.float64)) ** 2, axis=1)
        return int(np.argmin(d))


DEFAULT_MARKER_BRUSH = BrushProfile(0.008, 0.12, stamp_spacing=0.35, blend_mode=BLEND_MARKER)
DEFAULT_ACRYLIC_BRUSH = BrushProfile(0.015, 0.15, stamp_spacing=0.5, blend_mode=BLEND_ACRYLIC)

# Starter palette for the adaptive 12-color mode, replaced per painting by
# derive_palette. Spread across hue/value so it is usable before derivation.
DEFAULT_12_COLORS = (
    (0.05, 0.05, 0.05), (0.35, 0.2, 0.12), (0.7, 0.12, 0.12), (0.9, 0.5, 0.15),
    (0.93, 0.85, 0.25), (0.3, 0.6, 0.25), (0.1, 0.45, 0.45), (0.2, 0.35, 0.7),
    (0.45, 0.3, 0.6), (0.85, 0.55, 0.65), (0.6, 0.6, 0.6), (0.97, 0.96, 0.94),
)
DEFAULT_4_COLORS = (
    (0.08, 0.08, 0.08), (0.75, 0.15, 0.12), (0.93, 0.8, 0.2), (0.15, 0.3, 0.65),
)


@dataclass(frozen=True)
class PaintingSetting:
    """Media constraint regime: palette mode, brush envelope, stroke budget."""

    media: str
    palette: Palette
    brush: BrushProfile
    stroke_budget: int = 35

    def __post_init__(self):
        object.__setattr__(self, "stroke_budget", int(self.stroke_budget))
        bad = []
        if self.media not in MEDIA_KINDS:
            bad.append(Violation("media", f"unknown media {self.media!r}"))
        if self.stroke_budget < 1:
            bad.append(Violation("stroke_budget", f"must be positive, got {self.stroke_budget}"))
        if self.media == MEDIA_ACRYLIC_12:
            if len(self.palette) > 12 or self.palette.fixed:
                bad.append(Violation("palette", "adaptive acrylic needs <=12 colors, fixed=False"))
        elif self.media == MEDIA_ACRYLIC_4:
            if len(self.palette) != 4 or not self.palette.fixed:
                bad.append(Violation("palette", "fixed acrylic needs exactly 4 colors, fixed=True"))
        elif self.media == MEDIA_MARKER:
            if self.palette.colors != (BLACK,) or not self.palette.fixed:
                bad.append(Violation("palette", "marker palette must be exactly [black], fixed=True"))
            if self.brush.blend_mode != BLEND_MARKER:
                bad.append(Violation("brush.blend_mode", "marker media requires opaque_marker blending"))
        if bad:
            raise ConstraintViolationError(bad)

    def with_palette(self, palette: Palette) -> "PaintingSetting":
        return replace(self, palette=palette)


def marker_setting(stroke_budget: int = 35, brush: BrushProfile | None = None) -> PaintingSetting:
    return PaintingSetting(
        media=MEDIA_MARKER,
        palette=Palette(colors=(BLACK,), fixed=True),
        brush=brush or DEFAULT_MARKER_BRUSH,
        stroke_budget=stroke_budget,
    )


def acrylic12_setting(stroke_budget: int = 35, brush: BrushProfile | None = None,
                      palette: Palette | None = None) -> PaintingSetting:
    return PaintingSetting(
        media=MEDIA_ACRYLIC_12,
        palette=palette or Palette(colors=DEFAULT_12_COLORS, fixed=False),
        brush=brush or DEFAULT_ACRYLIC_BRUSH,
        stroke_budget=stroke_budget,
    )


def acrylic4_setting(stroke_budget: int = 35, brush: BrushProfile | None = None,
                     palette: Palette | None = None) -> PaintingSetting:
    return PaintingSetting(
        media=MEDIA_ACRYLIC_4,
        palette=palette or Palette(colors=DEFAULT_4_COLORS, fixed=True),
        brush=brush or DEFAULT_ACRYLIC_BRUSH,
        stroke_budget=stroke_budget,
    )


SETTING_NAMES = {
    "marker": marker_setting,
    "acrylic12": acrylic12_setting,
    "acrylic4": acrylic4_setting,
}


def setting_from_name(name: str, stroke_budget: int = 35) -> PaintingSetting:
    try:
        factory = SETTING_NAMES[name]
    except KeyError:
        raise ConstraintViolationError(
            [Violation("setting", f"unknown setting {name!r}; choose from {sorted(SETTING_NAMES)}")]
        ) from None
    return factory(stroke_budget=stroke_budget)


def validate_stroke(stroke: StrokeParams, setting: PaintingSetting) -> list[Violation]:
    """Collect every invariant the stroke violates under the setting.

    Returns an empty list when the stroke is acceptable. Does not clamp;
    callers that generate strokes are responsible for clamping first.
    """
    out: list[Violation] = []
    for name, pt in (("p0", stroke.p0), ("p1", stroke.p1), ("p2", stroke.p2)):
        if not (0.0 <= pt[0] <= 1.0 and 0.0 <= pt[1] <= 1.0):
            out.append(Violation(name, f"control point out of [0,1]^2 bounds: {pt}"))
    brush = setting.brush
    if not (brush.min_width <= stroke.width <= brush.max_width):
        out.append(Violation(
            "width", f"{stroke.width} outside brush range [{brush.min_width}, {brush.max_width}]"))
    if not (0 <= stroke.color_index < len(setting.palette)):
        out.append(Violation(
            "color_index", f"{stroke.color_index} not valid for palette of size {len(setting.palette)}"))
    if not (0.0 < stroke.opacity <= 1.0):
        out.append(Violation("opacity", f"must be in (0, 1], got {stroke.opacity}"))
    if setting.media == MEDIA_MARKER:
        if stroke.opacity != 1.0:
            out.append(Violation("opacity", "marker strokes must have opacity 1"))
        if stroke.color_index != 0:
            out.append(Violation("color_index", "marker strokes must use color 0 (black)"))
    return out


@dataclass
class Canvas:
    """Raster image plus a per-pixel authorship mask.

    ``pixels``: (H, W, 3) float64 in [0,1]; ``authorship``: (H, W) uint8
    over {AUTHOR_BLANK, AUTHOR_HUMAN, AUTHOR_ROBOT}. A pixel is blank iff
    no stroke has ever touched it.
    """

    width_px: int
    height_px: int
    pixels: np.ndarray
    authorship: np.ndarray

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ConstraintViolationError([Violation("dims", "canvas dimensions must be positive")])
        if self.pixels.shape != (self.height_px, self.width_px, 3):
            raise ConstraintViolationError(
                [Violation("pixels", f"expected shape {(self.height_px, self.width_px, 3)}, "
                                     f"got {self.pixels.shape}")])
        if self.authorship.shape != (self.height_px, self.width_px):
            raise ConstraintViolationError(
                [Violation("authorship", f"expected shape {(self.height_px, self.width_px)}, "
                                         f"got {self.authorship.shape}")])

    @classmethod
    def blank(cls, width_px: int, height_px: int) -> "Canvas":
        return cls(
            width_px=width_px,
            height_px=height_px,
            pixels=np.ones((height_px, width_px, 3), dtype=np.float64),
            authorship=np.zeros((height_px, width_px), dtype=np.uint8),
        )

    def copy(self) -> "Canvas":
        return Canvas(self.width_px, self.height_px, self.pixels.copy(), self.authorship.copy())

    def same_dims(self, other: "Canvas") -> bool:
        return self.width_px == other.width_px and self.height_px == other.height_px

    def equals(self, other: "Canvas") -> bool:
        return (self.same_dims(other)
                and np.array_equal(self.pixels, other.pixels)
                and np.array_equal(self.authorship, other.authorship))


@dataclass
class StrokePlan:
    """Ordered stroke sequence plus the setting it was planned under."""

    strokes: list[StrokeParams]
    setting: PaintingSetting
    seed: int = 0
    source_tag: str = ""

    def __post_init__(self):
        self.strokes = list(self.strokes)
        self.seed = int(self.seed)
        bad = []
        if len(self.strokes) > self.setting.stroke_budget:
            bad.append(Violation(
                "strokes", f"{len(self.strokes)} strokes exceed budget {self.setting.stroke_budget}"))
        for i, stroke in enumerate(self.strokes):
            for v in validate_stroke(stroke, self.setting):
                bad.append(Violation(f"strokes[{i}].{v.field}", v.message))
        if bad:
            raise ConstraintViolationError(bad)

    def __len__(self) -> int:
        return len(self.strokes)

    def subset(self, keep_indices: Sequence[int], source_tag: str | None = None) -> "StrokePlan":
        """Order-preserving stroke subset with the same setting and seed."""
        keep = sorted(set(int(i) for i in keep_indices))
        return StrokePlan(
            strokes=[self.strokes[i] for i in keep],
            setting=self.setting,
            seed=self.seed,
            source_tag=self.source_tag if source_tag is None else source_tag,
        )


# --- JSON wire formats (field order is fixed for diff-stable files) ---

def stroke_to_obj(stroke: StrokeParams) -> dict[str, Any]:
    return {
        "p0": [stroke.p0[0], stroke.p0[1]],
        "p1": [stroke.p1[0], stroke.p1[1]],
        "p2": [stroke.p2[0], stroke.p2[1]],
        "width": stroke.width,
        "color_index": stroke.color_index,
        "opacity": stroke.opacity,
    }


def stroke_from_obj(obj: dict[str, Any]) -> StrokeParams:
    return StrokeParams(
        p0=tuple(obj["p0"]), p1=tuple(obj["p1"]), p2=tuple(obj["p2"]),
        width=obj["width"], color_index=obj["color_index"], opacity=obj["opacity"],
    )


def setting_to_obj(setting: PaintingSetting) -> dict[str, Any]:
    return {
        "media": setting.media,
        "palette": {
            "colors": [list(c) for c in setting.palette.colors],
            "fixed": setting.palette.fixed,
        },
        "brush": {
            "min_width": setting.brush.min_width,
            "max_width": setting.brush.max_width,
            "stamp_spacing": setting.brush.stamp_spacing,
            "blend_mode": setting.brush.blend_mode,
        },
        "stroke_budget": setting.stroke_budget,
    }


def setting_from_obj(obj: dict[str, Any]) -> PaintingSetting:
    pal = obj["palette"]
    brush = obj["brush"]
    return PaintingSetting(
        media=obj["media"],
        palette=Palette(colors=tuple(tuple(c) for c in pal["colors"]), fixed=pal["fixed"]),
        brush=BrushProfile(
            min_width=brush["min_width"], max_width=brush["max_width"],
            stamp_spacing=brush["stamp_spacing"], blend_mode=brush["blend_mode"],
        ),
        stroke_budget=obj["stroke_budget"],
    )


def plan_to_obj(plan: StrokePlan) -> dict[str, Any]:
    return {
        "version": PLAN_FORMAT_VERSION,
        "setting": setting_to_obj(plan.setting),
        "seed": plan.seed,
        "source_tag": plan.source_tag,
        "strokes": [stroke_to_obj(s) for s in plan.strokes],
    }


def plan_to_json(plan: StrokePlan) -> str:
    return json.dumps(plan_to_obj(plan), indent=2) + "\n"


def plan_from_obj(obj: dict[str, Any]) -> StrokePlan:
    version = obj.get("version")
    if version != PLAN_FORMAT_VERSION:
        raise ConstraintViolationError(
            [Violation("version", f"unsupported plan format version {version!r}")])
    return StrokePlan(
        strokes=[stroke_from_obj(s) for s in obj["strokes"]],
        setting=setting_from_obj(obj["setting"]),
        seed=obj["seed"],
        source_tag=obj["source_tag"],
    )


def plan_from_json(text: str) -> StrokePlan:
    return plan_from_obj(json.loads(text))
