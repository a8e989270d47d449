"""Command-line interface: plan, render, dataset generate, metrics gap,
session export, serve. Exit codes: 0 success, 1 usage error, 2 runtime error."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import EngineConfig
from .dataset import generate_dataset, parse_strategies, read_manifest
from .errors import CopaintError
from .metrics import EmbeddingProvider, gap_report
from .planner import LossConfig, PlannerConfig, plan_strokes
from .pngio import load_image, resize_letterbox, save_png
from .render import render_plan
from .session import export_session, load_session
from .types import Canvas, plan_from_json, plan_to_json, setting_from_name


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copaint",
                                     description="Human-robot co-painting engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan strokes toward a target image")
    p.add_argument("--target", required=True)
    p.add_argument("--setting", default="marker", choices=["marker", "acrylic12", "acrylic4"])
    p.add_argument("--budget", type=int, default=35)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--canvas", help="current canvas PNG (default: blank)")
    p.add_argument("--size", default="256x256", help="WxH render resolution")
    p.add_argument("--candidates", type=int, default=64)
    p.add_argument("--refine-iters", type=int, default=30)
    p.add_argument("--render-out", help="also render the plan to this PNG")

    r = sub.add_parser("render", help="render a stroke plan JSON to PNG")
    r.add_argument("--plan", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--base", help="base canvas PNG (default: blank)")
    r.add_argument("--size", default="256x256")
    r.add_argument("--author", default="robot", choices=["human", "robot"])

    d = sub.add_parser("dataset", help="dataset jobs")
    dsub = d.add_subparsers(dest="dataset_command", required=True)
    g = dsub.add_parser("generate", help="build (partial, full, caption) pairs")
    g.add_argument("--corpus", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--setting", default="marker", choices=["marker", "acrylic12", "acrylic4"])
    g.add_argument("--budget", type=int, default=35)
    g.add_argument("--strategies", default="all,random:0.5,salient,semantic")
    g.add_argument("--filter-threshold", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--size", default="256x256")
    g.add_argument("--candidates", type=int, default=64)
    g.add_argument("--refine-iters", type=int, default=30)

    m = sub.add_parser("metrics", help="metric jobs")
    msub = m.add_subparsers(dest="metrics_command", required=True)
    mg = msub.add_parser("gap", help="pixel/semantic gap report over image pairs")
    mg.add_argument("--pairs", required=True,
                    help="JSONL with {id, image_a, image_b, text_score?} per line "
                         "(dataset manifests work: partial/full paths are used)")
    mg.add_argument("--provider", default="builtin", help="builtin or an http URL")
    mg.add_argument("--out", required=True)

    s = sub.add_parser("session", help="session jobs")
    ssub = s.add_subparsers(dest="session_command", required=True)
    se = ssub.add_parser("export", help="copy a persisted session to a directory")
    se.add_argument("--data-dir", required=True)
    se.add_argument("--id", required=True)
    se.add_argument("--out", required=True)

    v = sub.add_parser("serve", help="run the HTTP service")
    v.add_argument("--config", help="YAML config file")
    v.add_argument("--host")
    v.add_argument("--port", type=int)
    v.add_argument("--data-dir")
    v.add_argument("--static-dir")
    return parser


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def _load_canvas(path: str | None, width: int, height: int) -> Canvas:
    if not path:
        return Canvas.blank(width, height)
    img = resize_letterbox(load_image(path), width, height)
    canvas = Canvas.blank(width, height)
    canvas.pixels[:] = img
    return canvas


def _cmd_plan(args) -> int:
    width, height = _parse_size(args.size)
    setting = setting_from_name(args.setting, stroke_budget=args.budget)
    target = resize_letterbox(load_image(args.target), width, height)
    current = _load_canvas(args.canvas, width, height)
    cfg = PlannerConfig(candidates_per_stroke=args.candidates,
                        refine_iters=args.refine_iters, seed=args.seed)
    plan = plan_strokes(target, current, setting, cfg, LossConfig(),
                        source_tag=f"cli:{Path(args.target).name}")
    Path(args.out).write_text(plan_to_json(plan), encoding="utf-8")
    if args.render_out:
        save_png(render_plan(plan, current, "robot").pixels, args.render_out)
    print(f"planned {len(plan)} strokes -> {args.out}")
    return 0


def _cmd_render(args) -> int:
    plan = plan_from_json(Path(args.plan).read_text(encoding="utf-8"))
    width, height = _parse_size(args.size)
    base = _load_canvas(args.base, width, height)
    out = render_plan(plan, base, args.author)
    save_png(out.pixels, args.out)
    print(f"rendered {len(plan)} strokes -> {args.out}")
    return 0


def _cmd_dataset_generate(args) -> int:
    width, height = _parse_size(args.size)
    setting = setting_from_name(args.setting, stroke_budget=args.budget)
    manifest = generate_dataset(
        corpus_dir=args.corpus,
        out_dir=args.out,
        setting=setting,
        strategies=parse_strategies(args.strategies),
        planner_cfg=PlannerConfig(candidates_per_stroke=args.candidates,
                                  refine_iters=args.refine_iters, seed=args.seed),
        loss_cfg=LossConfig(),
        threshold=args.filter_threshold,
        seed=args.seed,
        workers=args.workers,
        width_px=width,
        height_px=height,
    )
    kept = len(read_manifest(manifest))
    print(f"wrote {kept} pairs -> {manifest}")
    return 0


def _cmd_metrics_gap(args) -> int:
    provider = EmbeddingProvider.from_spec(args.provider)
    pairs = []
    text_scores = {}
    root = Path(args.pairs).parent
    for rec in read_manifest(args.pairs):
        a_path = rec.get("image_a") or rec.get("partial_path")
        b_path = rec.get("image_b") or rec.get("full_path")
        if a_path is None or b_path is None:
            raise CopaintError(f"pair line missing image paths: {rec}")
        pid = str(rec["id"])
        pairs.append((pid,
                      load_image(root / a_path if not Path(a_path).is_absolute() else a_path),
                      load_image(root / b_path if not Path(b_path).is_absolute() else b_path)))
        if "text_score" in rec and rec["text_score"] is not None:
            text_scores[pid] = float(rec["text_score"])
    report = gap_report(pairs, provider, text_scores=text_scores or None)
    Path(args.out).write_text(json.dumps(report.to_obj(), indent=2) + "\n",
                              encoding="utf-8")
    print(f"gap report over {len(pairs)} pairs -> {args.out}")
    return 0


def _cmd_session_export(args) -> int:
    session = load_session(Path(args.data_dir) / "sessions" / args.id)
    export_session(session, args.out)
    print(f"exported session {args.id} -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    cfg = EngineConfig.from_file(args.config) if args.config else EngineConfig.from_mapping({})
    if args.host:
        cfg.host = args.host
    if args.port:
        cfg.port = args.port
    if args.data_dir:
        cfg.data_dir = args.data_dir
    if args.static_dir:
        cfg.static_dir = args.static_dir
    serve(cfg)
    return 0


_DISPATCH = {
    ("plan",): _cmd_plan,
    ("render",): _cmd_render,
    ("dataset", "generate"): _cmd_dataset_generate,
    ("metrics", "gap"): _cmd_metrics_gap,
    ("session", "export"): _cmd_session_export,
    ("serve",): _cmd_serve,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version, 2 for usage errors
        return 0 if exc.code in (0, None) else 1
    key = (args.command,)
    for attr in ("dataset_command", "metrics_command", "session_command"):
        if getattr(args, attr, None):
            key = (args.command, getattr(args, attr))
    handler = _DISPATCH[key]
    try:
        return handler(args)
    except KeyboardInterrupt:
        return 2
    except (CopaintError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
