"""HTTP surface for live interpretation sessions.

Endpoints (JSON bodies, versioned with a "v" field):

  POST /sessions                     {model, tagger?, config?}      -> {id}
  POST /sessions/{id}/events        {event: {type, attrs?}}        -> step result
  POST /sessions/{id}/query         {event_index?, activity, step?, instance?, semantics?}
  POST /sessions/{id}/explain       {event_index?, activity, step, instance}
  POST /sessions/{id}/finalize                                     -> summary
  GET  /sessions/{id}/stream        server-sent events: step results and
                                    deviation alerts (replays the journal,
                                    then live)
  GET  /sessions/{id}/state         prefix + per-step results

Sessions are in-memory with an idle TTL; requests against one session are
serialized. `model` and `tagger` are file paths resolved against the
artifact directory (PROCSIFT_MODEL_DIR by default) or, for the model, an
inline document. Without a tagger the session runs on a uniform
distribution, so filtering comes from the reasoner alone.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import aaf
from . import model as model_mod
from .errors import BudgetExceeded, ContractError, SchemaError
from .model import Event, step_from_name
from .pipeline import Analysis, AnalysisSummary, PipelineConfig, StepResult
from .reasoner import (
    CREDULOUS,
    SKEPTICAL,
    InterpArg,
    InterpretationQuery,
    InvalidityReason,
    Session,
)
from .tagger import TrainedTagger, UniformTagger

API_VERSION = 1


@dataclass
class LiveSession:
    id: str
    analysis: Analysis
    mapping: model_mod.TypeLevelMapping
    lock: threading.Lock = field(default_factory=threading.Lock)
    journal: list[dict] = field(default_factory=list)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    touched: float = field(default_factory=time.monotonic)

    def publish(self, message: dict) -> None:
        self.journal.append(message)
        for q in self.subscribers:
            q.put(message)


class SessionStore:
    def __init__(self, ttl: float) -> None:
        self.ttl = ttl
        self._sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()

    def put(self, session: LiveSession) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def get(self, session_id: str) -> LiveSession | None:
        with self._lock:
            self._expire()
            session = self._sessions.get(session_id)
            if session is not None:
                session.touched = time.monotonic()
            return session

    def _expire(self) -> None:
        now = time.monotonic()
        stale = [sid for sid, s in self._sessions.items() if now - s.touched > self.ttl]
        for sid in stale:
            del self._sessions[sid]


def _step_wire(result: StepResult, mapping) -> dict:
    return {
        "v": API_VERSION,
        "index": result.index,
        "ranking": [
            {"activity": mapping.activities[a], "probability": p}
            for a, p in result.ranking
        ],
        "deviation": result.deviation,
    }


def _interp_wire(tag: InterpArg, mapping) -> dict:
    return {
        "event_index": tag.index,
        "activity": mapping.activities[tag.activity],
        "step": tag.step.value,
        "instance": tag.instance,
    }


def _reason_wire(reason: InvalidityReason, mapping) -> dict:
    return {
        "kind": reason.kind,
        "indices": list(reason.indices),
        "constraint": reason.constraint,
        "argument": _interp_wire(reason.argument, mapping) if reason.argument else None,
    }


def _summary_wire(summary: AnalysisSummary, mapping) -> dict:
    return {
        "v": API_VERSION,
        "accepted": [
            [_interp_wire(t, mapping) for t in per_event] for per_event in summary.accepted
        ],
        "inconsistent": list(summary.inconsistent),
    }


def create_app(artifact_dir: str | None = None, session_ttl: float = 3600.0) -> FastAPI:
    base_dir = Path(artifact_dir or os.environ.get("PROCSIFT_MODEL_DIR", "."))
    store = SessionStore(session_ttl)
    app = FastAPI(title="procsift", version="0.1.0")

    def _resolve(path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else base_dir / p

    def _bad(msg: str, status: int = 400) -> JSONResponse:
        return JSONResponse({"v": API_VERSION, "error": msg}, status_code=status)

    @app.exception_handler(BudgetExceeded)
    async def _overflow(request: Request, exc: BudgetExceeded):
        return JSONResponse(
            {"v": API_VERSION, "error": str(exc), "retry": True}, status_code=503
        )

    @app.exception_handler(SchemaError)
    async def _schema(request: Request, exc: SchemaError):
        return _bad(str(exc))

    @app.exception_handler(ContractError)
    async def _contract(request: Request, exc: ContractError):
        return _bad(str(exc))

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise SchemaError("request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise SchemaError("request body must be a JSON object")
        return body

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await _json_body(request)
        model_ref = body.get("model")
        if model_ref is None:
            raise SchemaError("missing 'model'")
        if isinstance(model_ref, dict):
            doc = json.dumps(model_ref)
        elif isinstance(model_ref, str):
            path = _resolve(model_ref)
            if not path.exists():
                raise SchemaError(f"model file {model_ref!r} not found")
            doc = path.read_text()
        else:
            raise SchemaError("'model' must be a path or an inline document")
        mapping, process_model = model_mod.parse_model(doc)

        tagger_ref = body.get("tagger")
        if tagger_ref:
            tagger = TrainedTagger.load(_resolve(tagger_ref))
            if tagger.n_activities != mapping.n_activities:
                raise SchemaError("tagger and model disagree on the activity universe")
        else:
            tagger = UniformTagger(mapping.n_activities)

        cfg_doc = body.get("config") or {}
        if not isinstance(cfg_doc, dict):
            raise SchemaError("'config' must be an object")
        cfg = PipelineConfig(
            k=cfg_doc.get("k"),
            gamma=cfg_doc.get("gamma", 0.001),
            pseudo_count=cfg_doc.get("pseudo_count", 1.0),
        )
        session = Session(
            mapping,
            process_model,
            solver_budget=int(cfg_doc.get("solver_budget", aaf.DEFAULT_BUDGET)),
        )
        analysis = Analysis(session, cfg, tagger=tagger)
        live = LiveSession(id=uuid.uuid4().hex, analysis=analysis, mapping=mapping)
        store.put(live)
        return {"v": API_VERSION, "id": live.id}

    def _session_or_none(session_id: str) -> LiveSession | None:
        return store.get(session_id)

    @app.post("/sessions/{session_id}/events")
    async def post_event(session_id: str, request: Request):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        body = await _json_body(request)
        event_doc = body.get("event")
        if not isinstance(event_doc, dict) or "type" not in event_doc:
            raise SchemaError("missing 'event.type'")
        with live.lock:
            mapping = live.mapping
            etype = mapping.event_type_id(event_doc["type"])
            attrs = tuple(sorted((event_doc.get("attrs") or {}).items()))
            event = Event(live.analysis.session.prefix_length + 1, etype, attrs)
            result = live.analysis.process_event(event)
            wire = _step_wire(result, mapping)
            live.publish({"event": "step", "data": wire})
            if result.deviation:
                live.publish(
                    {"event": "deviation", "data": {"v": API_VERSION, "index": result.index}}
                )
        return wire

    def _parse_query(live: LiveSession, body: dict, need_full: bool) -> InterpretationQuery:
        mapping = live.mapping
        if "activity" not in body:
            raise SchemaError("missing 'activity'")
        activity = mapping.activity_id(body["activity"])
        step = body.get("step")
        instance = body.get("instance")
        if need_full and (step is None or instance is None):
            raise SchemaError("explain requires 'step' and 'instance'")
        semantics = body.get("semantics", CREDULOUS)
        if semantics not in (CREDULOUS, SKEPTICAL):
            raise SchemaError(f"unknown semantics {semantics!r}")
        index = body.get("event_index", live.analysis.session.prefix_length)
        if not isinstance(index, int):
            raise SchemaError("'event_index' must be an integer")
        return InterpretationQuery(
            event_index=index,
            activity=activity,
            step=step_from_name(step) if step is not None else None,
            instance=int(instance) if instance is not None else None,
            semantics=semantics,
        )

    @app.post("/sessions/{session_id}/query")
    async def post_query(session_id: str, request: Request):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        body = await _json_body(request)
        with live.lock:
            q = _parse_query(live, body, need_full=False)
            answer = live.analysis.session.answer(q)
        if isinstance(answer, bool):
            return {"v": API_VERSION, "answer": answer}
        return {
            "v": API_VERSION,
            "matches": [_interp_wire(t, live.mapping) for t in answer],
        }

    @app.post("/sessions/{session_id}/explain")
    async def post_explain(session_id: str, request: Request):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        body = await _json_body(request)
        with live.lock:
            q = _parse_query(live, body, need_full=True)
            reasons = live.analysis.session.explain(q)
        return {
            "v": API_VERSION,
            "reasons": [_reason_wire(r, live.mapping) for r in reasons],
        }

    @app.post("/sessions/{session_id}/finalize")
    async def post_finalize(session_id: str):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        with live.lock:
            summary = live.analysis.finalize()
            wire = _summary_wire(summary, live.mapping)
            live.publish({"event": "final", "data": wire})
        return wire

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        with live.lock:
            mapping = live.mapping
            prefix = [
                {"index": ev.index, "type": mapping.event_types[ev.etype], "attrs": dict(ev.attrs)}
                for ev in live.analysis.session.prefix
            ]
            results = [_step_wire(r, mapping) for r in live.analysis.results]
            finalized = live.analysis.finalized
        return {
            "v": API_VERSION,
            "prefix": prefix,
            "results": results,
            "finalized": finalized,
        }

    @app.get("/sessions/{session_id}/stream")
    async def get_stream(session_id: str, request: Request):
        live = _session_or_none(session_id)
        if live is None:
            return _bad("unknown session", 404)
        sub: queue.SimpleQueue = queue.SimpleQueue()
        with live.lock:
            backlog = list(live.journal)
            live.subscribers.append(sub)
        replay_only = request.query_params.get("replay") == "1"

        def feed():
            event_id = 0
            try:
                for message in backlog:
                    event_id += 1
                    yield (
                        f"id: {event_id}\nevent: {message['event']}\n"
                        f"data: {json.dumps(message['data'])}\n\n"
                    )
                if replay_only:
                    return
                while True:
                    try:
                        message = sub.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    event_id += 1
                    yield (
                        f"id: {event_id}\nevent: {message['event']}\n"
                        f"data: {json.dumps(message['data'])}\n\n"
                    )
            finally:
                with live.lock:
                    if sub in live.subscribers:
                        live.subscribers.remove(sub)

        return StreamingResponse(
            feed(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    return app
