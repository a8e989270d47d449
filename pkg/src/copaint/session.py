"""Turn-taking co-painting sessions: human strokes, robot turns, preservation.

A session is an append-only history of turns over one canvas. Human stroke
batches are applied atomically (any invalid stroke rejects the whole batch).
Robot turns fetch a target image from a provider, plan strokes against the
current canvas with the preservation penalty active, render them, and record
pixel/semantic gap metrics plus how much human-authored content survived.

Sessions persist as a directory of turn-indexed PNGs, per-turn stroke files,
and a ``session.json`` manifest; loading replays every turn from a blank
canvas and verifies the result against the stored current-canvas PNG.
"""

from __future__ import annotations

import json
import logging
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import (
    ConstraintViolationError,
    DimensionMismatchError,
    ProviderError,
    SessionIntegrityError,
)
from .metrics import EmbeddingProvider, delta_pix, delta_sem
from .palette import derive_palette
from .planner import LossConfig, PlannerConfig, plan_strokes
from .pngio import array_to_u8, decode_png, encode_png, load_image, resize_letterbox
from .render import paint_stroke_region, render_plan
from .types import (
    AUTHOR_CODES,
    AUTHOR_HUMAN,
    Canvas,
    MEDIA_ACRYLIC_12,
    PaintingSetting,
    StrokeParams,
    StrokePlan,
    Violation,
    plan_from_obj,
    plan_to_obj,
    setting_from_obj,
    setting_to_obj,
    stroke_from_obj,
    stroke_to_obj,
    validate_stroke,
)

log = logging.getLogger(__name__)

SESSION_FORMAT_VERSION = 1
PRESERVATION_TOLERANCE = 2.0 / 255.0


@dataclass(frozen=True)
class TargetProviderConfig:
    """Where robot-turn target images come from: a file path or an HTTP
    service that receives {prompt, current canvas PNG} and returns a PNG."""

    kind: str
    path: str = ""
    url: str = ""
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind not in ("file", "http"):
            raise ValueError(f"provider kind must be 'file' or 'http', got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file provider requires a path")
        if self.kind == "http" and not self.url:
            raise ValueError("http provider requires a url")


@dataclass
class Turn:
    author: str
    strokes: list[StrokeParams]
    plan: StrokePlan | None
    canvas_before: Canvas
    canvas_after: Canvas
    prompt: str | None = None
    target_image_ref: str | None = None
    target_image: np.ndarray | None = None
    metrics: dict[str, float] = field(default_factory=dict)
    # setting the strokes render under (robot turns may carry a derived palette)
    setting: PaintingSetting | None = None


@dataclass
class SessionState:
    id: str
    setting: PaintingSetting
    turns: list[Turn]
    current: Canvas
    created_at: str

    @property
    def width_px(self) -> int:
        return self.current.width_px

    @property
    def height_px(self) -> int:
        return self.current.height_px


def new_session(setting: PaintingSetting, width_px: int, height_px: int) -> SessionState:
    return SessionState(
        id=uuid.uuid4().hex,
        setting=setting,
        turns=[],
        current=Canvas.blank(width_px, height_px),
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def apply_human_strokes(session: SessionState,
                        strokes: Sequence[StrokeParams]) -> SessionState:
    """Render a human stroke batch onto the session canvas.

    Atomic: if any stroke violates the session setting, the whole batch is
    rejected and the session is untouched. Human strokes never count against
    the robot's stroke budget.
    """
    violations = []
    for i, stroke in enumerate(strokes):
        for v in validate_stroke(stroke, session.setting):
            violations.append(Violation(f"strokes[{i}].{v.field}", v.message))
    if violations:
        raise ConstraintViolationError(violations)
    before = session.current
    after = before.copy()
    for stroke in strokes:
        paint_stroke_region(after.pixels, after.authorship, stroke,
                            session.setting, AUTHOR_CODES["human"])
    turn = Turn(author="human", strokes=list(strokes), plan=None,
                canvas_before=before, canvas_after=after,
                setting=session.setting)
    session.turns.append(turn)
    session.current = after
    return session


def preservation_score(before: Canvas, after: Canvas) -> float:
    """Fraction of human-authored pixels whose color survived.

    A pixel counts as preserved when every channel stays within 2/255 of its
    value in ``before``. Returns 1.0 when no human-authored pixels exist.
    """
    if not before.same_dims(after):
        raise DimensionMismatchError(
            f"{(before.height_px, before.width_px)} vs {(after.height_px, after.width_px)}")
    human = before.authorship == AUTHOR_HUMAN
    total = int(human.sum())
    if total == 0:
        return 1.0
    diff = np.abs(after.pixels - before.pixels).max(axis=2)
    kept = int((diff[human] <= PRESERVATION_TOLERANCE).sum())
    return kept / total


def fetch_target(provider: TargetProviderConfig, prompt: str | None,
                 canvas: Canvas) -> np.ndarray:
    """Resolve the target image for a robot turn (file read or HTTP call)."""
    if provider.kind == "file":
        try:
            return load_image(provider.path)
        except FileNotFoundError as exc:
            raise ProviderError(f"target file {provider.path}: {exc}") from exc
    import requests

    try:
        resp = requests.post(
            provider.url,
            files={"canvas": ("canvas.png", encode_png(canvas.pixels), "image/png")},
            data={"prompt": prompt or ""},
            timeout=provider.timeout,
        )
    except requests.RequestException as exc:
        raise ProviderError(f"target provider {provider.url}: {exc}") from exc
    if resp.status_code != 200:
        raise ProviderError(f"target provider {provider.url}: HTTP {resp.status_code}")
    return decode_png(resp.content)


def robot_turn(session: SessionState, provider: TargetProviderConfig | None,
               prompt: str | None = None,
               planner_cfg: PlannerConfig | None = None,
               loss_cfg: LossConfig | None = None,
               embedding_provider: EmbeddingProvider | None = None,
               target_override: np.ndarray | None = None,
               ) -> tuple[SessionState, StrokePlan]:
    """Run one robot turn: fetch target, plan, render, record metrics.

    The session is mutated only after every step succeeds; provider or
    validation failures leave it bit-identical. Adaptive-palette media derive
    a fresh palette from the target for this turn's plan.
    """
    if target_override is not None:
        raw = np.asarray(target_override, dtype=np.float64)
        ref = "inline"
    else:
        if provider is None:
            raise ProviderError("no target provider configured")
        raw = fetch_target(provider, prompt, session.current)
        ref = provider.path if provider.kind == "file" else provider.url
    target = resize_letterbox(raw, session.width_px, session.height_px)
    setting = session.setting
    if setting.media == MEDIA_ACRYLIC_12:
        setting = setting.with_palette(derive_palette(target, setting))
    before = session.current
    plan = plan_strokes(target, before, setting, planner_cfg, loss_cfg,
                        source_tag=f"robot-turn:{len(session.turns)}")
    after = render_plan(plan, before, "robot")
    embedding_provider = embedding_provider or EmbeddingProvider()
    metrics = {
        "delta_pix": delta_pix(target, after.pixels),
        "delta_sem": delta_sem(target, after.pixels, embedding_provider),
        "preservation": preservation_score(before, after),
    }
    turn = Turn(author="robot", strokes=list(plan.strokes), plan=plan,
                canvas_before=before, canvas_after=after, prompt=prompt,
                target_image_ref=ref, target_image=target, metrics=metrics,
                setting=setting)
    session.turns.append(turn)
    session.current = after
    return session, plan


# -- persistence / export -----------------------------------------------------

def export_session(session: SessionState, out_dir) -> Path:
    """Write the session as turn-indexed PNGs plus a session.json manifest.

    The manifest is written last (atomic rename), so a directory with a valid
    session.json always describes fully written turns.
    """
    out = Path(out_dir)
    turns_dir = out / "turns"
    turns_dir.mkdir(parents=True, exist_ok=True)
    turn_objs = []
    for i, turn in enumerate(session.turns):
        prefix = f"{i:03d}"
        after_file = f"turns/{prefix}_after.png"
        (out / after_file).write_bytes(encode_png(turn.canvas_after.pixels))
        entry: dict[str, Any] = {
            "index": i,
            "author": turn.author,
            "prompt": turn.prompt,
            "metrics": turn.metrics,
            "stroke_count": len(turn.strokes),
            "canvas_after_file": after_file,
        }
        if turn.plan is not None:
            plan_file = f"turns/{prefix}_plan.json"
            (out / plan_file).write_text(
                json.dumps(plan_to_obj(turn.plan), indent=2) + "\n", encoding="utf-8")
            entry["plan_file"] = plan_file
        else:
            strokes_file = f"turns/{prefix}_strokes.json"
            (out / strokes_file).write_text(json.dumps({
                "version": SESSION_FORMAT_VERSION,
                "author": turn.author,
                "setting": setting_to_obj(turn.setting or session.setting),
                "strokes": [stroke_to_obj(s) for s in turn.strokes],
            }, indent=2) + "\n", encoding="utf-8")
            entry["strokes_file"] = strokes_file
        if turn.target_image is not None:
            target_file = f"turns/{prefix}_target.png"
            (out / target_file).write_bytes(encode_png(turn.target_image))
            entry["target_file"] = target_file
        elif turn.target_image_ref:
            entry["target_ref"] = turn.target_image_ref
        turn_objs.append(entry)
    (out / "canvas.png").write_bytes(encode_png(session.current.pixels))
    doc = {
        "version": SESSION_FORMAT_VERSION,
        "id": session.id,
        "created_at": session.created_at,
        "setting": setting_to_obj(session.setting),
        "width_px": session.width_px,
        "height_px": session.height_px,
        "turns": turn_objs,
    }
    tmp = out / "session.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, out / "session.json")
    return out


def load_session(session_dir) -> SessionState:
    """Rebuild a session by replaying its turns from a blank canvas.

    The replayed current canvas must match the stored canvas.png at 8-bit
    precision, otherwise the directory is rejected as corrupt.
    """
    root = Path(session_dir)
    manifest = root / "session.json"
    if not manifest.exists():
        raise SessionIntegrityError(f"{root}: no session.json")
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    if doc.get("version") != SESSION_FORMAT_VERSION:
        raise SessionIntegrityError(f"{root}: unsupported version {doc.get('version')!r}")
    setting = setting_from_obj(doc["setting"])
    session = SessionState(
        id=doc["id"],
        setting=setting,
        turns=[],
        current=Canvas.blank(doc["width_px"], doc["height_px"]),
        created_at=doc["created_at"],
    )
    for entry in doc["turns"]:
        before = session.current
        after = before.copy()
        plan = None
        if "plan_file" in entry:
            plan = plan_from_obj(json.loads((root / entry["plan_file"]).read_text()))
            strokes = plan.strokes
            turn_setting = plan.setting
        else:
            obj = json.loads((root / entry["strokes_file"]).read_text())
            strokes = [stroke_from_obj(s) for s in obj["strokes"]]
            turn_setting = setting_from_obj(obj["setting"])
        code = AUTHOR_CODES[entry["author"]]
        for stroke in strokes:
            paint_stroke_region(after.pixels, after.authorship, stroke,
                                turn_setting, code)
        session.turns.append(Turn(
            author=entry["author"], strokes=strokes, plan=plan,
            canvas_before=before, canvas_after=after,
            prompt=entry.get("prompt"),
            target_image_ref=entry.get("target_file") or entry.get("target_ref"),
            metrics=entry.get("metrics") or {},
            setting=turn_setting,
        ))
        session.current = after
    stored = decode_png((root / "canvas.png").read_bytes())
    if not np.array_equal(array_to_u8(session.current.pixels), array_to_u8(stored)):
        raise SessionIntegrityError(f"{root}: replay does not match stored canvas")
    return session
