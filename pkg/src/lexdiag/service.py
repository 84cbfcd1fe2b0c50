"""HTTP session service.

A thin wrapper over the consultation loop: POST a narrative to open a
session, POST answers while the state is AwaitingAnswer, GET snapshots to
poll. Sessions live in process memory; per-session locks serialize the
operations of one session while leaving other sessions free to proceed.
"""

from __future__ import annotations

import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import AppConfig
from .errors import EmptyTextError, LexdiagError, WrongStateError
from .gateway import LlmGateway
from .pipelines import bundle_from_artifacts, gateway_from_config
from .session import (
    DialogueSession,
    ModelBundle,
    SessionState,
    open_session,
    submit_answer,
)

MAX_NARRATIVE_CHARS = 16384


class OpenSessionBody(BaseModel):
    narrative: str


class AnswerBody(BaseModel):
    text: str


class TranscriptItem(BaseModel):
    role: str
    text: str
    node_label: str | None = None
    at: float


class SessionEnvelope(BaseModel):
    """Observable session state; model internals never appear here."""

    session_id: str
    state: str
    turn: int
    question: str | None = None
    final_view: str | None = None
    transcript: list[TranscriptItem]


class HealthReport(BaseModel):
    status: str  # ready | degraded
    models_loaded: bool
    gateway_ready: bool
    sessions: int
    detail: str | None = None


def envelope_from_session(session: DialogueSession) -> SessionEnvelope:
    question = None
    if session.state is SessionState.AWAITING_ANSWER and session.transcript:
        question = session.transcript[-1].text
    final_view = (
        session.draft_view if session.state is SessionState.COMPLETE else None
    )
    return SessionEnvelope(
        session_id=session.session_id,
        state=session.state.value,
        turn=session.turn,
        question=question,
        final_view=final_view,
        transcript=[
            TranscriptItem(
                role=entry.role,
                text=entry.text,
                node_label=entry.node_label,
                at=entry.at,
            )
            for entry in session.transcript
        ],
    )


@dataclass
class ServiceRuntime:
    """Loaded models plus the live session table."""

    config: AppConfig
    bundle: ModelBundle | None = None
    gateway: LlmGateway | None = None
    load_error: str | None = None
    sessions: dict[str, DialogueSession] = field(default_factory=dict)
    locks: dict[str, threading.Lock] = field(default_factory=dict)
    table_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def ready(self) -> bool:
        return self.bundle is not None and self.gateway is not None

    def register(self, session: DialogueSession) -> None:
        with self.table_lock:
            self.sessions[session.session_id] = session
            self.locks[session.session_id] = threading.Lock()

    def get(self, session_id: str) -> tuple[DialogueSession, threading.Lock]:
        with self.table_lock:
            session = self.sessions.get(session_id)
            lock = self.locks.get(session_id)
        if session is None or lock is None:
            raise HTTPException(status_code=404, detail="unknown session id")
        return session, lock


def load_runtime(config: AppConfig) -> ServiceRuntime:
    """Builds the runtime, degrading instead of crashing on missing models.

    A service without checkpoints still serves health (as degraded) so an
    operator can see what is wrong; session opens return 503 until the
    artifacts exist.
    """
    runtime = ServiceRuntime(config=config)
    try:
        runtime.gateway = gateway_from_config(config)
    except LexdiagError as exc:
        runtime.load_error = f"gateway: {exc}"
        return runtime
    try:
        runtime.bundle = bundle_from_artifacts(config)
    except LexdiagError as exc:
        runtime.load_error = f"models: {exc}"
    return runtime


def create_app(runtime: ServiceRuntime) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        # Shutdown drain: taking every per-session lock once waits out any
        # in-flight deliberation before the process exits.
        with runtime.table_lock:
            locks = list(runtime.locks.values())
        for lock in locks:
            with lock:
                pass

    app = FastAPI(title="lexdiag session service", version="1", lifespan=lifespan)

    @app.exception_handler(LexdiagError)
    def engine_error(_request, exc: LexdiagError):
        return JSONResponse(
            status_code=500,
            content={"detail": f"{type(exc).__name__}: {exc}"},
        )

    @app.post("/v1/sessions", response_model=SessionEnvelope, status_code=201)
    def open_new_session(body: OpenSessionBody) -> SessionEnvelope:
        if not runtime.ready:
            raise HTTPException(
                status_code=503,
                detail=runtime.load_error or "models not loaded",
            )
        narrative = body.narrative
        if not narrative.strip():
            raise HTTPException(status_code=400, detail="narrative is empty")
        if len(narrative) > MAX_NARRATIVE_CHARS:
            raise HTTPException(
                status_code=400,
                detail=f"narrative exceeds {MAX_NARRATIVE_CHARS} characters",
            )
        with runtime.table_lock:
            if len(runtime.sessions) >= runtime.config.service.max_sessions:
                raise HTTPException(
                    status_code=503, detail="session capacity reached"
                )
        session = open_session(
            narrative,
            runtime.bundle,
            runtime.gateway,
            session_id=uuid.uuid4().hex[:16],
        )
        if session.state is SessionState.ABORTED:
            raise HTTPException(
                status_code=503,
                detail=session.abort_cause or "session aborted on open",
            )
        runtime.register(session)
        return envelope_from_session(session)

    @app.post("/v1/sessions/{session_id}/answers", response_model=SessionEnvelope)
    def answer(session_id: str, body: AnswerBody) -> SessionEnvelope:
        session, lock = runtime.get(session_id)
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="answer is empty")
        with lock:
            try:
                submit_answer(session, body.text, runtime.bundle, runtime.gateway)
            except WrongStateError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except EmptyTextError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            return envelope_from_session(session)

    @app.get("/v1/sessions/{session_id}", response_model=SessionEnvelope)
    def snapshot(session_id: str) -> SessionEnvelope:
        session, lock = runtime.get(session_id)
        with lock:
            return envelope_from_session(session)

    @app.get("/v1/health", response_model=HealthReport)
    def health() -> HealthReport:
        with runtime.table_lock:
            n_sessions = len(runtime.sessions)
        ready = runtime.ready
        return HealthReport(
            status="ready" if ready else "degraded",
            models_loaded=runtime.bundle is not None,
            gateway_ready=runtime.gateway is not None,
            sessions=n_sessions,
            detail=None if ready else runtime.load_error,
        )

    return app
