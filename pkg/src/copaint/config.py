"""Engine configuration: YAML key-value file plus COPAINT_ env overrides.

Keys may be nested maps or flat dotted names (``planner.seed: 7``). The env
override for a key replaces dots with double underscores, uppercased:
``COPAINT_PLANNER__SEED=7``, ``COPAINT_SERVICE__PORT=9000``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import urlparse

import yaml

from .metrics import EmbeddingProvider
from .planner import LossConfig, PlannerConfig
from .session import TargetProviderConfig
from .types import PaintingSetting, setting_from_name

ENV_PREFIX = "COPAINT_"


def _flatten(mapping: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _coerce(text: str) -> Any:
    return yaml.safe_load(text)


def _env_overrides(environ=None) -> dict[str, Any]:
    environ = environ if environ is not None else os.environ
    out: dict[str, Any] = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        dotted = key[len(ENV_PREFIX):].lower().replace("__", ".")
        out[dotted] = _coerce(value)
    return out


def _check_url(name: str, url: str) -> None:
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ValueError(f"{name}: not a valid http(s) URL: {url!r}")


@dataclass
class EngineConfig:
    width_px: int = 256
    height_px: int = 256
    setting_name: str = "marker"
    stroke_budget: int = 35
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    target_provider: TargetProviderConfig | None = None
    embedding_provider: EmbeddingProvider = field(default_factory=EmbeddingProvider)
    data_dir: str = "./copaint-data"
    host: str = "127.0.0.1"
    port: int = 8777
    static_dir: str | None = None

    def default_setting(self) -> PaintingSetting:
        return setting_from_name(self.setting_name, stroke_budget=self.stroke_budget)

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any] | None, environ=None) -> "EngineConfig":
        flat = _flatten(mapping or {})
        flat.update(_env_overrides(environ))
        cfg = cls()
        cfg.width_px = int(flat.get("canvas.width", cfg.width_px))
        cfg.height_px = int(flat.get("canvas.height", cfg.height_px))
        cfg.setting_name = str(flat.get("setting.media", cfg.setting_name))
        cfg.stroke_budget = int(flat.get("setting.stroke_budget", cfg.stroke_budget))
        cfg.planner = PlannerConfig(
            candidates_per_stroke=int(flat.get("planner.candidates_per_stroke",
                                               cfg.planner.candidates_per_stroke)),
            refine_iters=int(flat.get("planner.refine_iters", cfg.planner.refine_iters)),
            refine_step=float(flat.get("planner.refine_step", cfg.planner.refine_step)),
            seed=int(flat.get("planner.seed", cfg.planner.seed)),
        )
        scales = flat.get("loss.scales", list(cfg.loss.scales))
        if isinstance(scales, str):
            scales = [int(s) for s in scales.split(",") if s.strip()]
        cfg.loss = LossConfig(
            pixel_weight=float(flat.get("loss.pixel_weight", cfg.loss.pixel_weight)),
            edge_weight=float(flat.get("loss.edge_weight", cfg.loss.edge_weight)),
            scales=tuple(int(s) for s in scales),
            preserve_penalty=float(flat.get("loss.preserve_penalty",
                                            cfg.loss.preserve_penalty)),
        )
        kind = flat.get("providers.target.kind")
        if kind:
            cfg.target_provider = TargetProviderConfig(
                kind=str(kind),
                path=str(flat.get("providers.target.path", "")),
                url=str(flat.get("providers.target.url", "")),
                timeout=float(flat.get("providers.target.timeout", 30.0)),
            )
            if cfg.target_provider.kind == "http":
                _check_url("providers.target.url", cfg.target_provider.url)
        emb_kind = str(flat.get("providers.embedding.kind", "builtin"))
        emb_url = str(flat.get("providers.embedding.url", ""))
        if emb_kind == "http":
            _check_url("providers.embedding.url", emb_url)
        cfg.embedding_provider = EmbeddingProvider(
            kind=emb_kind, url=emb_url,
            timeout=float(flat.get("providers.embedding.timeout", 30.0)),
        )
        cfg.data_dir = str(flat.get("service.data_dir", cfg.data_dir))
        cfg.host = str(flat.get("service.host", cfg.host))
        cfg.port = int(flat.get("service.port", cfg.port))
        static = flat.get("service.static_dir")
        cfg.static_dir = str(static) if static else None
        return cfg

    @classmethod
    def from_file(cls, path, environ=None) -> "EngineConfig":
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config root must be a mapping")
        return cls.from_mapping(data, environ=environ)
