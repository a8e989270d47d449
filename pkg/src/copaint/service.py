"""HTTP service exposing sessions, robot-turn jobs, and artifacts to the UI.

Mutations to one session are serialized by a per-session lock; robot turns
run on worker threads and are polled via job ids (planning can take tens of
seconds). Every committed turn persists the session to disk in the export
format, so a killed service reloads every session whose last turn completed.
"""

from __future__ import annotations

import base64
import logging
import threading
import uuid
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import __version__
from .config import EngineConfig
from .errors import (
    ConstraintViolationError,
    CopaintError,
    ImageDecodeError,
    ProviderError,
    SessionIntegrityError,
)
from .pngio import decode_png, encode_png
from .session import (
    SessionState,
    apply_human_strokes,
    export_session,
    load_session,
    new_session,
    robot_turn,
)
from .types import (
    plan_to_obj,
    setting_from_name,
    setting_to_obj,
    stroke_from_obj,
    stroke_to_obj,
)

log = logging.getLogger(__name__)


class SessionStore:
    """In-memory sessions with per-session locks and directory persistence."""

    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.sessions: dict[str, SessionState] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()

    def load_all(self) -> None:
        root = self.data_dir / "sessions"
        if not root.is_dir():
            return
        for entry in sorted(root.iterdir()):
            if not entry.is_dir():
                continue
            try:
                session = load_session(entry)
            except (SessionIntegrityError, Exception) as exc:
                log.warning("skipping session dir %s: %s", entry, exc)
                continue
            self.sessions[session.id] = session
            self.locks[session.id] = threading.Lock()

    def add(self, session: SessionState) -> None:
        with self._registry:
            self.sessions[session.id] = session
            self.locks[session.id] = threading.Lock()
        self.persist(session)

    def get(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail="session not found") from None

    def lock(self, session_id: str) -> threading.Lock:
        return self.locks[session_id]

    def persist(self, session: SessionState) -> None:
        export_session(session, self.data_dir / "sessions" / session.id)

    def flush_all(self) -> None:
        for session in list(self.sessions.values()):
            try:
                self.persist(session)
            except Exception as exc:
                log.warning("flush failed for %s: %s", session.id, exc)


class JobManager:
    def __init__(self):
        self.jobs: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    def submit(self, fn) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self.jobs[job_id] = {"id": job_id, "status": "queued",
                                 "error": None, "result": None}

        def run():
            with self._lock:
                self.jobs[job_id]["status"] = "running"
            try:
                result = fn()
            except CopaintError as exc:
                with self._lock:
                    self.jobs[job_id].update(status="error", error=str(exc))
            except Exception as exc:  # planner/renderer bugs should not hang polls
                log.exception("job %s failed", job_id)
                with self._lock:
                    self.jobs[job_id].update(status="error", error=f"internal: {exc}")
            else:
                with self._lock:
                    self.jobs[job_id].update(status="done", result=result)

        threading.Thread(target=run, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> dict[str, Any]:
        with self._lock:
            job = self.jobs.get(job_id)
            if job is None:
                raise HTTPException(status_code=404, detail="job not found")
            return dict(job)


class StrokeModel(BaseModel):
    p0: list[float]
    p1: list[float]
    p2: list[float]
    width: float
    color_index: int = 0
    opacity: float = 1.0


class StrokesRequest(BaseModel):
    strokes: list[StrokeModel]


class CreateSessionRequest(BaseModel):
    width_px: int = Field(default=0, ge=0)
    height_px: int = Field(default=0, ge=0)
    setting: str | None = None
    stroke_budget: int | None = None


class RobotTurnRequest(BaseModel):
    prompt: str | None = None
    target_b64: str | None = None


def _session_summary(session: SessionState) -> dict[str, Any]:
    return {
        "id": session.id,
        "created_at": session.created_at,
        "width_px": session.width_px,
        "height_px": session.height_px,
        "setting": setting_to_obj(session.setting),
        "turn_count": len(session.turns),
        "turns": [
            {
                "index": i,
                "author": t.author,
                "prompt": t.prompt,
                "stroke_count": len(t.strokes),
                "metrics": t.metrics,
            }
            for i, t in enumerate(session.turns)
        ],
    }


def create_app(config: EngineConfig) -> FastAPI:
    store = SessionStore(Path(config.data_dir))
    jobs = JobManager()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        store.load_all()
        yield
        store.flush_all()

    app = FastAPI(title="copaint", version=__version__, lifespan=lifespan)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.store = store
    app.state.jobs = jobs
    app.state.config = config

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        name = req.setting or config.setting_name
        budget = req.stroke_budget or config.stroke_budget
        try:
            setting = setting_from_name(name, stroke_budget=budget)
        except ConstraintViolationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        session = new_session(setting,
                              req.width_px or config.width_px,
                              req.height_px or config.height_px)
        store.add(session)
        return _session_summary(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_summary(store.get(session_id))

    @app.get("/sessions/{session_id}/canvas.png")
    def get_canvas(session_id: str):
        session = store.get(session_id)
        return Response(content=encode_png(session.current.pixels),
                        media_type="image/png")

    @app.post("/sessions/{session_id}/strokes")
    def post_strokes(session_id: str, req: StrokesRequest):
        session = store.get(session_id)
        strokes = [stroke_from_obj(s.model_dump()) for s in req.strokes]
        with store.lock(session_id):
            try:
                apply_human_strokes(session, strokes)
            except ConstraintViolationError as exc:
                raise HTTPException(status_code=400, detail={
                    "message": "stroke batch rejected",
                    "violations": [{"field": v.field, "message": v.message}
                                   for v in exc.violations],
                }) from None
            store.persist(session)
        return _session_summary(session)

    @app.post("/sessions/{session_id}/robot-turn", status_code=202)
    def post_robot_turn(session_id: str, req: RobotTurnRequest):
        session = store.get(session_id)
        target_override = None
        if req.target_b64:
            try:
                target_override = decode_png(base64.b64decode(req.target_b64))
            except (ValueError, ImageDecodeError) as exc:
                raise HTTPException(status_code=400,
                                    detail=f"bad target image: {exc}") from None
        elif config.target_provider is None:
            raise HTTPException(status_code=400,
                                detail="no target provider configured and no target uploaded")

        def work():
            with store.lock(session_id):
                _, plan = robot_turn(
                    session, config.target_provider, prompt=req.prompt,
                    planner_cfg=config.planner, loss_cfg=config.loss,
                    embedding_provider=config.embedding_provider,
                    target_override=target_override,
                )
                store.persist(session)
                turn_index = len(session.turns) - 1
                return {
                    "turn_index": turn_index,
                    "plan_length": len(plan),
                    "metrics": session.turns[turn_index].metrics,
                }

        return {"job_id": jobs.submit(work)}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return jobs.get(job_id)

    @app.get("/sessions/{session_id}/turns/{index}/plan.json")
    def get_turn_plan(session_id: str, index: int):
        session = store.get(session_id)
        if not (0 <= index < len(session.turns)):
            raise HTTPException(status_code=404, detail="turn not found")
        turn = session.turns[index]
        if turn.plan is not None:
            return plan_to_obj(turn.plan)
        return {
            "version": 1,
            "author": turn.author,
            "setting": setting_to_obj(turn.setting or session.setting),
            "strokes": [stroke_to_obj(s) for s in turn.strokes],
        }

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        session = store.get(session_id)
        rows = [
            {"index": i, "author": t.author, "metrics": t.metrics}
            for i, t in enumerate(session.turns)
        ]
        agg: dict[str, float] = {}
        robot_rows = [r["metrics"] for r in rows if r["metrics"]]
        if robot_rows:
            for key in ("delta_pix", "delta_sem", "preservation"):
                vals = [m[key] for m in robot_rows if key in m]
                if vals:
                    agg[f"mean_{key}"] = sum(vals) / len(vals)
        return {"turns": rows, "aggregates": agg}

    if config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=config.static_dir, html=True),
                  name="ui")

    return app


def serve(config: EngineConfig) -> None:
    """Run the service until interrupted; raises on unbindable port or
    unwritable data directory."""
    import uvicorn

    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    probe = data_dir / ".write-probe"
    try:
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise ProviderError(f"data directory {data_dir} not writable: {exc}") from exc
    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="info")
