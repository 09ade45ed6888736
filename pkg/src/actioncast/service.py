"""JSON-over-HTTP service for session replay and live prediction.

Sessions are replayed logs: the service loads a recorded (or simulated)
log, steps through it one action at a time, and answers top-k forecasts,
patch images, and attraction-field samples for the explorer UI.  All
endpoints live under /v1/; errors come back as {"error": code, "message"}.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import corpus as corpus_io
from .config import ServiceConfig
from .events import read_sessions
from .field import AttractionTarget, pull_at
from .model import FilterEmptyError, Predictor, load_checkpoint
from .patches import PatchDb, locate_on_screen
from .synth import SyntheticScene, load_scenes, render_scene, scenes_resolver
from .tokenizer import (
    ActionVocabulary,
    BUTTON_CLICK,
    ContextFeatures,
    GENERIC_CLICK,
    KEYSTROKE,
    SCROLL_ACTION,
    UNK_INDEX,
    UserAction,
    action_from_label,
)

_FILTER_KINDS = {
    "buttons": (BUTTON_CLICK,),
    "keys": (KEYSTROKE,),
    "scrolls": (SCROLL_ACTION,),
    "clicks": (BUTTON_CLICK, GENERIC_CLICK),
}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class SessionState:
    session_id: str
    rows: list[corpus_io.ActionRow]
    cursor: int = 0
    synthetic: list[tuple[UserAction, ContextFeatures]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def window_pairs(self, vocab: ActionVocabulary) -> list[tuple[UserAction, ContextFeatures]]:
        taken = [
            (row.action, corpus_io.row_context(row, vocab))
            for row in self.rows[: self.cursor]
        ]
        return taken + list(self.synthetic)

    def current_app(self) -> str | None:
        if not self.rows:
            return None
        index = min(max(self.cursor - 1, 0), len(self.rows) - 1)
        return self.rows[index].app


class ServiceState:
    """Shared read-only models plus the mutable session table."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.predictor: Predictor | None = None
        self.patch_db: PatchDb | None = None
        self.scenes: dict[str, SyntheticScene] = {}
        self._screenshot_cache: dict[str, object] = {}
        self.sessions: dict[str, SessionState] = {}
        self._sessions_lock = threading.Lock()

        if config.checkpoint and config.vocab:
            import json as _json
            from pathlib import Path as _Path

            vocab = ActionVocabulary.from_json(
                _json.loads(_Path(config.vocab).read_text(encoding="utf-8"))
            )
            self.predictor = Predictor(load_checkpoint(config.checkpoint), vocab)
        if config.patch_db:
            self.patch_db = PatchDb.load(
                config.patch_db,
                threshold=config.ncc_threshold,
                margin_px=config.margin_px,
                size_tol_px=config.size_tol_px,
                color_tol=config.color_tol,
            )
        if config.scenes:
            self.scenes = load_scenes(config.scenes)

    def require_predictor(self) -> Predictor:
        if self.predictor is None:
            raise ApiError(409, "no_model", "service started without checkpoint/vocab")
        return self.predictor

    def get_session(self, session_id: str) -> SessionState:
        with self._sessions_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id}")
        return session

    def add_session(self, rows: list[corpus_io.ActionRow]) -> SessionState:
        session = SessionState(session_id=secrets.token_hex(8), rows=rows)
        with self._sessions_lock:
            self.sessions[session.session_id] = session
        return session

    def screenshot_for(self, app: str | None):
        if app is None or app not in self.scenes:
            return None
        if app not in self._screenshot_cache:
            self._screenshot_cache[app], _ = render_scene(self.scenes[app])
        return self._screenshot_cache[app]


def _keep_set(filter_spec: str | None, vocab: ActionVocabulary) -> set[int] | None:
    if not filter_spec:
        return None
    if filter_spec in _FILTER_KINDS:
        kinds = _FILTER_KINDS[filter_spec]
        return {i for a, i in vocab.index_of.items() if a.kind in kinds}
    if filter_spec.startswith("label:"):
        labels = [l for l in filter_spec[len("label:"):].split(",") if l]
        keep = set()
        for label in labels:
            try:
                keep.add(vocab.encode(action_from_label(label)))
            except ValueError:
                raise ApiError(400, "bad_filter", f"unparseable label {label!r}")
        return keep
    raise ApiError(400, "bad_filter", f"unknown filter {filter_spec!r}")


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig())
    app = FastAPI(title="actioncast", version="1")
    app.state.service = state

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.code, "message": exc.message}
        )

    def _predictions(session: SessionState, k: int, filter_spec: str | None) -> dict:
        predictor = state.require_predictor()
        keep = _keep_set(filter_spec, predictor.vocab)
        t0 = time.monotonic()
        pairs = session.window_pairs(predictor.vocab)
        try:
            ranked = predictor.topk(pairs, k=k, keep=keep)
        except FilterEmptyError:
            raise ApiError(409, "filter_empty", "filter keeps zero probability mass")
        predictions = []
        for action, prob in ranked:
            entry: dict = {"action": action.label, "prob": prob}
            if action.kind == BUTTON_CLICK:
                pid = action.patch_id
                if state.patch_db is not None and pid in state.patch_db.entries:
                    entry["patch_ref"] = f"/v1/patches/{pid}.ppm"
            predictions.append(entry)
        known = [a for a, _ in pairs if predictor.vocab.encode(a) != UNK_INDEX]
        window = [a.label for a in known[-predictor.n_past:]]
        return {
            "predictions": predictions,
            "window": window,
            "k": k,
            "elapsed_ms": (time.monotonic() - t0) * 1000.0,
        }

    def _session_body(session: SessionState, extra: dict | None = None) -> dict:
        body = {
            "id": session.session_id,
            "cursor": session.cursor,
            "length": len(session.rows),
            "synthetic": [a.label for a, _ in session.synthetic],
            "eof": session.cursor >= len(session.rows),
        }
        if extra:
            body.update(extra)
        return body

    @app.post("/v1/sessions")
    async def create_session(payload: dict):
        rows = _load_rows(payload, state)
        session = state.add_session(rows)
        return _session_body(session)

    @app.post("/v1/sessions/{session_id}/step")
    async def step(session_id: str):
        session = state.get_session(session_id)
        with session.lock:
            if session.cursor >= len(session.rows):
                return _session_body(session, {"eof": True})
            row = session.rows[session.cursor]
            session.cursor += 1
            session.synthetic.clear()  # stepping along the log resumes reality
            taken = {"action": row.action.label, "t": row.t, "app": row.app}
            extra: dict = {"taken": taken}
            if state.predictor is not None:
                extra.update(_predictions(session, state.config.topk, None))
            return _session_body(session, extra)

    @app.post("/v1/sessions/{session_id}/whatif")
    async def whatif(session_id: str, payload: dict):
        session = state.get_session(session_id)
        predictor = state.require_predictor()
        with session.lock:
            if payload.get("undo"):
                if not session.synthetic:
                    raise ApiError(409, "nothing_to_undo", "no synthetic actions to remove")
                session.synthetic.pop()
            else:
                label = payload.get("action")
                if not label:
                    raise ApiError(400, "bad_request", "body must carry 'action' or 'undo'")
                try:
                    action = action_from_label(label)
                except ValueError as exc:
                    raise ApiError(400, "bad_action", str(exc))
                pairs = session.window_pairs(predictor.vocab)
                context = (
                    pairs[-1][1]
                    if pairs
                    else ContextFeatures(None, predictor.vocab.n_apps, 0.5, 0.5, 0)
                )
                # What-ifs are immediate hypotheticals: elapsed resets to 0.
                context = ContextFeatures(
                    context.app_index, context.n_apps, context.rel_x, context.rel_y, 0
                )
                session.synthetic.append((action, context))
            return _session_body(session, _predictions(session, state.config.topk, None))

    @app.post("/v1/sessions/{session_id}/reset")
    async def reset(session_id: str):
        session = state.get_session(session_id)
        with session.lock:
            session.cursor = 0
            session.synthetic.clear()
            extra = {}
            if state.predictor is not None:
                extra = _predictions(session, state.config.topk, None)
            return _session_body(session, extra)

    @app.get("/v1/sessions/{session_id}/predict")
    async def predict(session_id: str, k: int = 5, filter: str | None = None):
        if k < 1:
            raise ApiError(400, "bad_k", "k must be >= 1")
        session = state.get_session(session_id)
        with session.lock:
            return _predictions(session, k, filter)

    @app.get("/v1/sessions/{session_id}/field")
    async def field_grid(
        session_id: str,
        ox: float = 0.0,
        oy: float = 0.0,
        nx: int = 16,
        ny: int = 12,
        step: float = 40.0,
    ):
        session = state.get_session(session_id)
        predictor = state.require_predictor()
        if nx < 1 or ny < 1 or step <= 0:
            raise ApiError(400, "bad_grid", "grid must be >= 1x1 with positive step")
        t0 = time.monotonic()
        with session.lock:
            pairs = session.window_pairs(predictor.vocab)
            ranked = predictor.topk(pairs, k=state.config.topk)
            targets = _locate_targets(ranked, session, state)
            if not targets:
                return {
                    "origin": [ox, oy],
                    "step": step,
                    "nx": nx,
                    "ny": ny,
                    "vectors": [],
                    "targets": [],
                    "reason": "no_located_targets",
                    "elapsed_ms": (time.monotonic() - t0) * 1000.0,
                }
            cfg = state.config.field_config()
            vectors = [
                list(pull_at((ox + i * step, oy + j * step), targets, cfg))
                for j in range(ny)
                for i in range(nx)
            ]
            return {
                "origin": [ox, oy],
                "step": step,
                "nx": nx,
                "ny": ny,
                "vectors": vectors,
                "targets": [
                    {
                        "center": list(t.center),
                        "rect": list(t.rect),
                        "confidence": t.confidence,
                    }
                    for t in targets
                ],
                "elapsed_ms": (time.monotonic() - t0) * 1000.0,
            }

    @app.get("/v1/vocab")
    async def vocab_listing():
        predictor = state.require_predictor()
        body = predictor.vocab.to_json()
        body["size"] = predictor.vocab.size
        return body

    @app.get("/v1/patches/{patch_id}.ppm")
    async def patch_image(patch_id: int):
        if state.patch_db is None or patch_id not in state.patch_db.entries:
            raise ApiError(404, "unknown_patch", f"no patch {patch_id}")
        patch = state.patch_db.entries[patch_id].patch
        header = f"P6\n{patch.width_px} {patch.height_px}\n255\n".encode("ascii")
        return Response(
            content=header + patch.pixels.tobytes(),
            media_type="image/x-portable-pixmap",
        )

    if state.config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=state.config.static_dir, html=True), name="ui")

    return app


def _load_rows(payload: dict, state: ServiceState) -> list[corpus_io.ActionRow]:
    index = int(payload.get("session_index", 0))
    if "actions" in payload:
        sessions = corpus_io.read_actions(payload["actions"])
    elif "log" in payload:
        event_sessions = read_sessions(payload["log"])
        resolver = scenes_resolver(state.scenes) if state.scenes else None
        from .tokenizer import tokenize_taken

        sessions = [corpus_io.rows_from_taken(tokenize_taken(s, resolver)) for s in event_sessions]
    else:
        raise ApiError(400, "bad_request", "body must carry 'log' or 'actions' path")
    if not sessions:
        raise ApiError(400, "empty_log", "log contains no sessions")
    if not 0 <= index < len(sessions):
        raise ApiError(400, "bad_session_index", f"log has {len(sessions)} sessions")
    return sessions[index]


def _locate_targets(
    ranked: list[tuple[UserAction, float]],
    session: SessionState,
    state: ServiceState,
) -> list[AttractionTarget]:
    """Button predictions turned into field targets.

    Prefers locating the stored patch on the session's current screenshot
    (the vision path); falls back to the scene's ground-truth rect.
    """
    app = session.current_app()
    screenshot = state.screenshot_for(app)
    scene = state.scenes.get(app) if app else None
    window_at = (scene.window[0], scene.window[1]) if scene else (0, 0)
    targets: list[AttractionTarget] = []
    for action, prob in ranked:
        if action.kind != BUTTON_CLICK or action.patch_id is None:
            continue
        rect = None
        if (
            state.patch_db is not None
            and action.patch_id in state.patch_db.entries
            and screenshot is not None
        ):
            patch = state.patch_db.entries[action.patch_id].patch
            matches = locate_on_screen(patch, screenshot, state.config.ncc_threshold)
            if matches:
                x, y, _score = matches[0]
                rect = (float(x), float(y), float(patch.width_px), float(patch.height_px))
        if rect is None and scene is not None:
            for button in scene.buttons:
                if button.id == action.patch_id:
                    bx, by, bw, bh = button.rect
                    rect = (float(window_at[0] + bx), float(window_at[1] + by), float(bw), float(bh))
                    break
        if rect is None:
            continue
        targets.append(
            AttractionTarget(
                center=(rect[0] + rect[2] / 2.0, rect[1] + rect[3] / 2.0),
                rect=rect,
                confidence=prob,
            )
        )
    return targets
