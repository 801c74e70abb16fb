"""HTTP session API for interactive human-teller play and the web playground.

Sessions are in-memory; requests within one session are serialized by a
per-session lock, and handlers share only the immutable weights and gallery.
The batch engine in `dialogue` drives every state change, so an HTTP session
and a scripted run produce identical transcripts for identical inputs.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import clarification as cq
from .dialogue import DialogueEngine
from .drawer import DrawerParams, Vocabulary, init_params, load_params
from .uncertainty import TurnUncertainty
from .world import Gallery, Scene, default_gallery, random_scene

DEFAULT_THETA = 0.7


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    theta: float = DEFAULT_THETA
    seed: int = 0
    drawer_weights: str | None = None


class MessageRequest(BaseModel):
    text: str


class AnswerRequest(BaseModel):
    text: str


class PatchConfigRequest(BaseModel):
    theta: float


def default_service_vocab(gallery: Gallery) -> Vocabulary:
    """Deterministic vocabulary covering the templates and gallery names."""
    texts = list(gallery.names)
    texts.append("add a small medium large facing left right at the top middle bottom "
                 "center what size is are the and ? ok not in scene .")
    return Vocabulary.from_texts(texts)


class Session:
    def __init__(self, session_id: str, params: DrawerParams, theta: float,
                 target: Scene, gallery: Gallery):
        self.session_id = session_id
        self.target = target
        self.engine = DialogueEngine(session_id, params, cq.ThresholdPolicy(theta=theta), gallery)
        self.lock = threading.Lock()

    @property
    def theta(self) -> float:
        return self.engine.policy.theta


class ServiceState:
    def __init__(self, gallery: Gallery, params: DrawerParams):
        self.gallery = gallery
        self.params = params
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()

    def get(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return session


def _gallery_payload(gallery: Gallery) -> list[dict]:
    return [
        {"id": e.id, "name": e.name, "is_person": e.is_person,
         "is_symmetric": e.is_symmetric, "expression_count": e.expression_count,
         "pose_count": e.pose_count}
        for e in gallery
    ]


def _uncertainty_payload(tu: TurnUncertainty, engine: DialogueEngine) -> dict:
    per_clipart = []
    for c in tu.per_clipart:
        dist = engine.latest_size_dists.get(c.clipart)
        per_clipart.append({
            "clipart": c.clipart,
            "name": engine.gallery.name_of(c.clipart),
            "u_select": c.u_select,
            "h_size": c.h_size,
            "h_flip": c.h_flip,
            "size_dist": None if dist is None else [float(p) for p in dist],
        })
    return {
        "u_select_max": tu.u_select_max,
        "h_size_max": tu.h_size_max,
        "h_flip_max": tu.h_flip_max,
        "per_clipart": per_clipart,
    }


def _transcript_payload(session: Session) -> list[dict]:
    turns = []
    for t in session.engine.turns:
        turns.append({
            "turn_index": t.turn_index,
            "teller_text": t.teller_text,
            "drawer_reply": t.drawer_reply,
            "action": t.action.to_dict(),
            "cq": None if t.cq is None else {
                "question_text": t.cq.question_text,
                "answer_text": t.cq.answer_text,
                "targets": [[cid, None if size is None else size.label]
                            for cid, size in t.cq.targets],
            },
            "post_cq_action": None if t.post_cq_action is None else t.post_cq_action.to_dict(),
            "canvas_after": t.canvas_after.to_dict(),
        })
    return turns


def create_app(weights_path: str | None = None, static_dir: str | None = None,
               gallery: Gallery | None = None) -> FastAPI:
    gallery = gallery or default_gallery()
    if weights_path is not None:
        params = load_params(Path(weights_path).read_bytes(), gallery)
    else:
        params = init_params(default_service_vocab(gallery), gallery, seed=0)
    state = ServiceState(gallery, params)
    app = FastAPI(title="cqsim playground service")
    app.state.service = state

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": "invalid_request", "message": str(exc.errors())})

    @app.post("/api/session")
    def create_session(req: CreateSessionRequest):
        if req.theta < 0:
            raise ApiError(400, "invalid_theta", "theta must be >= 0")
        params_for_session = state.params
        if req.drawer_weights:
            try:
                params_for_session = load_params(Path(req.drawer_weights).read_bytes(), gallery)
            except (OSError, ValueError) as exc:
                raise ApiError(400, "bad_weights", f"cannot load weights: {exc}") from exc
        target = random_scene(req.seed, gallery)
        session_id = uuid.uuid4().hex
        session = Session(session_id, params_for_session, req.theta, target, gallery)
        with state.registry_lock:
            state.sessions[session_id] = session
        return {
            "session_id": session_id,
            "target_scene": target.to_dict(),
            "gallery": _gallery_payload(gallery),
        }

    @app.post("/api/session/{session_id}/message")
    def post_instruction(session_id: str, req: MessageRequest):
        session = state.get(session_id)
        with session.lock:
            if session.engine.pending is not None:
                raise ApiError(409, "question_pending",
                               "answer the pending clarification question first")
            outcome = session.engine.observe_instruction(req.text)
            question = None
            if outcome.question is not None:
                question = {"text": outcome.question, "targets": outcome.question_targets}
            return {
                "drawer_reply": outcome.question if outcome.question else "ok",
                "question": question,
                "canvas": outcome.canvas.to_dict(),
                "uncertainty": _uncertainty_payload(outcome.uncertainty, session.engine),
            }

    @app.post("/api/session/{session_id}/answer")
    def post_answer(session_id: str, req: AnswerRequest):
        session = state.get(session_id)
        with session.lock:
            pending = session.engine.pending
            if pending is None:
                raise ApiError(409, "no_pending_question", "no clarification question is pending")
            parsed = cq.parse_answer_sizes(req.text, pending.targets, gallery)
            fallback = "not in the scene" in req.text.lower()
            if parsed is None and not fallback:
                raise ApiError(400, "unparseable_answer",
                               "please mention a size: small, medium, or large")
            by_id = dict(parsed or [])
            answered = [(cid, by_id.get(cid)) for cid in pending.targets]
            _action, tu = session.engine.submit_answer(req.text, answered, fallback=fallback)
            return {
                "drawer_reply": "ok",
                "canvas": session.engine.canvas.to_dict(),
                "uncertainty": _uncertainty_payload(tu, session.engine),
            }

    @app.patch("/api/session/{session_id}/config")
    def patch_config(session_id: str, req: PatchConfigRequest):
        session = state.get(session_id)
        with session.lock:
            if req.theta < 0:
                raise ApiError(400, "invalid_theta", "theta must be >= 0")
            session.engine.set_policy(cq.ThresholdPolicy(theta=req.theta))
            return {"ok": True, "theta": session.theta}

    @app.get("/api/session/{session_id}")
    def get_state(session_id: str):
        session = state.get(session_id)
        with session.lock:
            pending = session.engine.pending
            return {
                "session_id": session.session_id,
                "theta": session.theta,
                "target_scene": session.target.to_dict(),
                "canvas": session.engine.canvas.to_dict(),
                "pending_question": None if pending is None else
                    {"text": pending.question_text, "targets": pending.targets},
                "transcript": _transcript_payload(session),
            }

    @app.get("/api/gallery")
    def get_gallery():
        return {"gallery": _gallery_payload(gallery)}

    static_path = Path(static_dir) if static_dir else Path(__file__).parent / "static"
    if static_path.is_dir():
        app.mount("/", StaticFiles(directory=str(static_path), html=True), name="static")
    return app
