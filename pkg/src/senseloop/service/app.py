"""FastAPI application wrapping the engine.

Endpoints:
  POST /sessions                      create a session for a case
  GET  /sessions/{id}                 state snapshot (+ attributions)
  POST /sessions/{id}/events          apply one intervention, returns the diff
  POST /sessions/{id}/finalize        accept a diagnosis (optionally override)
  GET  /schema                        concept/diagnosis vocabulary
  GET  /cases                         available cases
  GET  /cases/{id}/image              case image bytes
  GET  /cases/{id}/heatmaps/{concept} concept heatmap bytes
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..conformal import load_calibration
from ..dataio import load_cases, load_schema
from ..domain import EventKind, SensemakingState
from ..engine import SessionConfig, SessionContext
from ..errors import (
    CorruptLogError,
    EngineError,
    OutOfOrderEventError,
    ParseError,
    SenseloopError,
    SessionFinalizedError,
)
from ..scoring import load_weights
from .manager import (
    NotFoundError,
    ServiceBundle,
    SessionManager,
    acceptance_payload,
    attribution_payload,
    state_diff,
)
from .schemas import (
    AcceptanceInfo,
    CaseSummary,
    CreateSessionRequest,
    EventDiffResponse,
    EventRequest,
    FinalizeRequest,
    SchemaResponse,
    SessionResponse,
)
from .store import SessionStore


@dataclass
class ServiceConfig:
    """Parsed config file; all paths resolved against the file's directory."""

    schema: Path
    weights: Path
    calibration: Path
    cases: Path
    probs: Path
    session_dir: Path
    heatmaps_dir: Optional[Path] = None
    images_dir: Optional[Path] = None
    ui_dir: Optional[Path] = None
    delta: float = 0.8
    tau_e: float = 0.5
    alpha: Optional[float] = None
    host: str = "127.0.0.1"
    port: int = 8000


def load_service_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"config file {path}: {exc}") from exc
    base = path.parent

    def resolve(key: str, default=None) -> Optional[Path]:
        value = raw.get(key, default)
        return None if value is None else (base / value)

    required = ["schema", "weights", "calibration", "cases", "probs", "session_dir"]
    missing = [k for k in required if raw.get(k) is None]
    if missing:
        raise ParseError(f"config file {path}: missing keys {missing}")
    return ServiceConfig(
        schema=resolve("schema"),
        weights=resolve("weights"),
        calibration=resolve("calibration"),
        cases=resolve("cases"),
        probs=resolve("probs"),
        session_dir=resolve("session_dir"),
        heatmaps_dir=resolve("heatmaps_dir"),
        images_dir=resolve("images_dir"),
        ui_dir=resolve("ui_dir"),
        delta=float(raw.get("delta", 0.8)),
        tau_e=float(raw.get("tau_e", 0.5)),
        alpha=raw.get("alpha"),
        host=raw.get("host", "127.0.0.1"),
        port=int(raw.get("port", 8000)),
    )


def build_bundle(config: ServiceConfig) -> ServiceBundle:
    schema = load_schema(config.schema)
    weights = load_weights(config.weights, schema)
    calibration = load_calibration(config.calibration, schema)
    if config.alpha is not None and abs(calibration.alpha - config.alpha) > 1e-12:
        raise ValueError(
            f"config alpha {config.alpha} does not match calibration "
            f"alpha {calibration.alpha}")
    cases, problems = load_cases(
        config.cases, config.probs, schema, heatmaps_dir=config.heatmaps_dir)
    if problems:
        rejected = ", ".join(p.case_id for p in problems[:5])
        raise ValueError(
            f"{len(problems)} case(s) failed validation (first: {rejected}); "
            f"fix the dataset before serving")
    return ServiceBundle(
        schema=schema,
        weights=weights,
        calibration=calibration,
        cases={c.case_id: c for c in cases},
        defaults=SessionConfig(delta=config.delta, tau_e=config.tau_e),
    )


_ERROR_STATUS: list[tuple[type, int]] = [
    (NotFoundError, 404),
    (OutOfOrderEventError, 409),
    (SessionFinalizedError, 410),
    (CorruptLogError, 500),
    (EngineError, 422),       # validation, unknown refs, threshold not met
    (SenseloopError, 422),
]


def _status_for(exc: SenseloopError) -> int:
    for etype, status in _ERROR_STATUS:
        if isinstance(exc, etype):
            return status
    return 500


def create_app(config: ServiceConfig, bundle: Optional[ServiceBundle] = None) -> FastAPI:
    bundle = bundle or build_bundle(config)
    manager = SessionManager(bundle, SessionStore(config.session_dir))
    app = FastAPI(title="senseloop session service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.manager = manager
    app.state.config = config

    @app.exception_handler(SenseloopError)
    async def senseloop_error_handler(_: Request, exc: SenseloopError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    def session_response(state: SensemakingState) -> SessionResponse:
        ctx = manager.context_for(state.session_id)
        return SessionResponse(
            session_id=state.session_id,
            case_id=state.case_id,
            t=state.t,
            state=state.to_dict(),
            attributions=attribution_payload(ctx, state),
            acceptance=AcceptanceInfo(**acceptance_payload(state)),
            finalized=state.finalized,
        )

    @app.get("/schema", response_model=SchemaResponse)
    def get_schema():
        schema = bundle.schema
        return SchemaResponse(
            schema_hash=schema.schema_hash,
            concepts=[c.to_dict() for c in schema.concepts],
            diagnoses=list(schema.diagnoses),
            delta_default=bundle.defaults.delta,
            tau_e_default=bundle.defaults.tau_e,
        )

    @app.post("/sessions", response_model=SessionResponse, status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            state = manager.create_session(req.case_id, req.delta, req.tau_e)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return session_response(state)

    @app.get("/sessions/{session_id}", response_model=SessionResponse)
    def get_session(session_id: str):
        return session_response(manager.get_state(session_id))

    @app.post("/sessions/{session_id}/events", response_model=EventDiffResponse)
    def post_event(session_id: str, req: EventRequest):
        try:
            kind = EventKind(req.kind)
        except ValueError as exc:
            raise HTTPException(status_code=422,
                                detail=f"unknown event kind {req.kind!r}") from exc
        previous, state, event = manager.post_event(
            session_id, req.seq, kind, req.payload)
        ctx = manager.context_for(session_id)
        diff = state_diff(previous, state)
        return EventDiffResponse(
            session_id=session_id,
            event_id=event.event_id,
            attributions=attribution_payload(ctx, state),
            acceptance=AcceptanceInfo(**diff.pop("acceptance")),
            **diff,
        )

    @app.post("/sessions/{session_id}/finalize", response_model=SessionResponse)
    def finalize(session_id: str, req: FinalizeRequest):
        state = manager.finalize(session_id, req.label, req.override)
        return session_response(state)

    @app.get("/cases", response_model=list[CaseSummary])
    def list_cases():
        summaries = []
        for case_id in sorted(bundle.cases):
            case = bundle.cases[case_id]
            summaries.append(CaseSummary(
                case_id=case_id,
                image_available=_image_path(case_id) is not None,
                heatmap_concepts=sorted(case.heatmap_refs or {}),
            ))
        return summaries

    def _image_path(case_id: str) -> Optional[Path]:
        case = bundle.case(case_id)
        base = config.images_dir or config.cases.parent
        path = (base / case.image_ref).resolve()
        if not str(path).startswith(str(base.resolve())):
            return None
        return path if path.is_file() else None

    @app.get("/cases/{case_id}/image")
    def get_case_image(case_id: str):
        path = _image_path(case_id)
        if path is None:
            raise HTTPException(status_code=404,
                                detail=f"no image for case {case_id!r}")
        media = "image/png" if path.suffix == ".png" else "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media)

    @app.get("/cases/{case_id}/heatmaps/{concept_id}")
    def get_case_heatmap(case_id: str, concept_id: str):
        case = bundle.case(case_id)
        refs = case.heatmap_refs or {}
        if concept_id not in refs:
            raise HTTPException(
                status_code=404,
                detail=f"no heatmap for case {case_id!r} concept {concept_id!r}")
        return Response(content=Path(refs[concept_id]).read_bytes(),
                        media_type="image/x-portable-graymap")

    if config.ui_dir is not None and Path(config.ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
