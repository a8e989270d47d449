"""copaint: a human-robot co-painting engine.

Budgeted stroke planning toward target images, turn-taking sessions that
preserve human-authored content, a self-supervised (partial, full, caption)
dataset pipeline, and pixel/semantic gap metrics.
"""

__version__ = "0.1.0"

from .errors import (
    ConstraintViolationError,
    CopaintError,
    DimensionMismatchError,
    ImageDecodeError,
    ProviderError,
    SessionIntegrityError,
    StrategyParameterError,
)
from .types import (
    BrushProfile,
    Canvas,
    PaintingSetting,
    Palette,
    StrokeParams,
    StrokePlan,
    acrylic4_setting,
    acrylic12_setting,
    marker_setting,
    setting_from_name,
    validate_stroke,
)
from .render import render_plan, render_stroke
from .palette import derive_palette
from .planner import LossConfig, PlannerConfig, compute_loss, plan_strokes, refine_plan
from .metrics import EmbeddingProvider, delta_pix, delta_sem, embed, gap_report, pearson
from .session import (
    SessionState,
    TargetProviderConfig,
    Turn,
    apply_human_strokes,
    export_session,
    load_session,
    new_session,
    preservation_score,
    robot_turn,
)
from .dataset import (
    RemovalStrategy,
    SourceItem,
    TrainingPair,
    export_dataset,
    filter_pair,
    generate_dataset,
    make_partial,
    simulate_full,
)
from .vision import saliency_map, segment_regions

__all__ = [name for name in dir() if not name.startswith("_")]
