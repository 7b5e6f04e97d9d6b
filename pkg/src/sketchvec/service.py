"""HTTP facade: sessions, steps, candidate galleries, overrides, exports,
and a server-sent-events stream of trace records.

All reads are served from the session trace (single source of truth), so a
GET never touches loop state; writes go through the SessionRunner, which
serializes them behind the per-session lock. Long runs (steps > 1) execute
in a background thread and report 202; completion is observed on /events.
"""

from __future__ import annotations

import base64
import json
import queue
import threading
import uuid
from typing import Iterator

from fastapi import FastAPI, Form, Request, Response, UploadFile
from fastapi.responses import JSONResponse, StreamingResponse

from .config import ServiceConfig
from .gateway.base import BackendUnavailable, GatewayError, MalformedModelOutput, ModelGateway
from .gateway.oracle import OracleGateway
from .gateway.remote import RemoteGateway
from .grammar import GrammarError, parse_diagram
from .loop import (
    ConfigError,
    InvalidOverride,
    LoopPhaseError,
    Phase,
    SessionConfig,
    override_from_payload,
)
from .render.raster import EncodingFailure, decode_png, encode_png, render_image
from .render.svg import compile_svg
from .session import RunInProgress, SessionRunner
from .store import SessionStore, SessionTrace, TraceRecord, UnknownSession

_EVENT_POLL_S = 0.25
_EVENT_KEEPALIVE_EVERY = 40  # polls between keep-alive comments (~10s)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


class SessionManager:
    def __init__(self, service_config: ServiceConfig, store: SessionStore):
        self.service_config = service_config
        self.store = store
        self.runners: dict[str, SessionRunner] = {}
        self._lock = threading.Lock()
        self._runs: dict[str, dict] = {}

    # -- gateway construction -------------------------------------------------

    def build_gateway(self, backend: str, config: SessionConfig, extra: dict) -> ModelGateway:
        if backend == "oracle":
            target_raw = extra.get("oracle_target")
            if not isinstance(target_raw, dict):
                raise ApiError(
                    400,
                    "missing_oracle_target",
                    "backend 'oracle' needs an 'oracle_target' diagram in the config",
                )
            try:
                target = parse_diagram(json.dumps(target_raw), config.canvas)
            except GrammarError as exc:
                raise ApiError(400, "invalid_oracle_target", str(exc)) from exc
            return OracleGateway(target)
        if backend == "remote":
            if self.service_config.remote is None:
                raise ApiError(
                    400,
                    "remote_not_configured",
                    "no remote model endpoint configured for this service",
                )
            return RemoteGateway(self.service_config.remote)
        raise ApiError(400, "unknown_backend", f"unknown backend {backend!r}")

    def create(self, sketch_png: bytes, raw_config: dict) -> SessionRunner:
        extra = {
            key: raw_config.pop(key)
            for key in ("backend", "oracle_target")
            if key in raw_config
        }
        if "canvas" not in raw_config:
            raw_config["canvas"] = {
                "width": self.service_config.default_canvas_width,
                "height": self.service_config.default_canvas_height,
            }
        try:
            config = SessionConfig.from_payload(raw_config)
        except ConfigError as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        backend = extra.get("backend", self.service_config.default_backend)
        gateway = self.build_gateway(backend, config, extra)
        runner = SessionRunner.create(
            self.store,
            config,
            sketch_png,
            gateway,
            config_payload_extra={"backend": backend, **extra},
        )
        with self._lock:
            self.runners[runner.session_id] = runner
        return runner

    def runner(self, session_id: str) -> SessionRunner:
        with self._lock:
            runner = self.runners.get(session_id)
        if runner is None:
            if self.store.session_exists(session_id):
                raise ApiError(
                    409,
                    "session_not_resident",
                    "session exists on disk but is not loaded in this process; "
                    "read endpoints remain available",
                )
            raise ApiError(404, "unknown_session", session_id)
        return runner

    def trace(self, session_id: str) -> SessionTrace:
        try:
            return self.store.load_trace(session_id)
        except UnknownSession as exc:
            raise ApiError(404, "unknown_session", session_id) from exc

    # -- background runs ---------------------------------------------------------

    def start_run(self, runner: SessionRunner, steps: int) -> str:
        token = str(uuid.uuid4())
        self._runs[token] = {"session_id": runner.session_id, "done": False, "error": None}

        def work() -> None:
            try:
                runner.run_steps(steps)
            except Exception as exc:  # recorded; observed via /events + phase
                self._runs[token]["error"] = str(exc)
            finally:
                self._runs[token]["done"] = True

        thread = threading.Thread(target=work, name=f"run-{token[:8]}", daemon=True)
        thread.start()
        return token


# ---------------------------------------------------------------------------
# Trace-derived views
# ---------------------------------------------------------------------------

def _step_views(trace: SessionTrace, config: SessionConfig) -> list[dict]:
    """Rebuild per-step views (with outcomes and diagrams) from the trace."""
    canvas = config.canvas
    views: list[dict] = []
    current: dict | None = None
    diagram_before: dict = {"shapes": []}
    steps: dict[int, dict] = {}
    for record in trace.records:
        if record.type == "init_program":
            diagram_before = record.payload["diagram"]
        elif record.type == "critique" and record.step and record.step > 0:
            current = {
                "index": record.step,
                "critique": record.payload["report"],
                "candidates": [],
                "verdict": None,
                "outcome": None,
                "diagram_after": None,
            }
            steps[record.step] = current
        elif record.type == "candidate" and current is not None:
            current["candidates"].append(record.payload)
        elif record.type == "verdict" and current is not None:
            selected = record.payload["selected"]
            current["verdict"] = record.payload
            if selected >= 1:
                current["outcome"] = "accepted"
                diagram_before = current["candidates"][selected - 1]["diagram"]
            else:
                current["outcome"] = "reverted"
            current["diagram_after"] = diagram_before
            views.append(current)
        elif record.type == "override":
            action = record.payload.get("action", {})
            if action.get("action") == "select_candidate":
                step = steps.get(action.get("step"))
                if step is not None and 1 <= action.get("index", 0) <= len(step["candidates"]):
                    step["outcome"] = "overridden"
                    chosen = step["candidates"][action["index"] - 1]["diagram"]
                    step["diagram_after"] = chosen
                    diagram_before = chosen
            elif action.get("action") == "edit_program":
                diagram_before = action.get("diagram", diagram_before)
    # Validate the diagrams still parse (they always should).
    for view in views:
        parse_diagram(json.dumps(view["diagram_after"]), canvas)
    return views


def _render_b64(diagram_payload: dict, config: SessionConfig) -> str:
    diagram = parse_diagram(json.dumps(diagram_payload), config.canvas)
    return _b64(encode_png(render_image(diagram, config.render_supersample)))


def _current_diagram_payload(trace: SessionTrace) -> dict:
    """The session's current program as recorded in the trace."""
    views_source = [r for r in trace.records if r.type == "final"]
    if views_source:
        return views_source[-1].payload["diagram"]
    config = SessionConfig.from_payload(_strip_backend(trace.meta.payload["config"]))
    views = _step_views(trace, config)
    if views:
        return views[-1]["diagram_after"]
    inits = [r for r in trace.records if r.type == "init_program"]
    if inits:
        return inits[-1].payload["diagram"]
    return {"shapes": []}


def _strip_backend(config_payload: dict) -> dict:
    return {
        k: v for k, v in config_payload.items() if k not in ("backend", "oracle_target")
    }


def _sse_format(record: TraceRecord) -> str:
    data = json.dumps(
        {
            "seq": record.seq,
            "type": record.type,
            "step": record.step,
            "ts": record.ts,
            "payload": record.payload,
        },
        ensure_ascii=True,
    )
    return f"id: {record.seq}\nevent: {record.type}\ndata: {data}\n\n"


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

def create_app(
    service_config: ServiceConfig | None = None,
    store: SessionStore | None = None,
) -> FastAPI:
    service_config = service_config or ServiceConfig()
    store = store or SessionStore(service_config.store_root)
    manager = SessionManager(service_config, store)

    app = FastAPI(title="sketchvec", version="0.1.0")
    app.state.manager = manager

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def _translate(exc: Exception) -> ApiError:
        if isinstance(exc, ApiError):
            return exc
        if isinstance(exc, (GrammarError, ConfigError, InvalidOverride, EncodingFailure)):
            return ApiError(400, type(exc).__name__, str(exc))
        if isinstance(exc, UnknownSession):
            return ApiError(404, "unknown_session", str(exc))
        if isinstance(exc, (RunInProgress, LoopPhaseError)):
            return ApiError(409, type(exc).__name__, str(exc))
        if isinstance(exc, (BackendUnavailable, MalformedModelOutput, GatewayError)):
            return ApiError(502, type(exc).__name__, str(exc))
        return ApiError(500, "internal_error", str(exc))

    @app.exception_handler(Exception)
    async def _any_error(_request: Request, exc: Exception) -> JSONResponse:
        translated = _translate(exc)
        return JSONResponse(
            status_code=translated.status,
            content={"code": translated.code, "message": translated.message},
        )

    def _session_config(session_id: str) -> SessionConfig:
        trace = manager.trace(session_id)
        return SessionConfig.from_payload(_strip_backend(trace.meta.payload["config"]))

    def _summary(session_id: str) -> dict:
        trace = manager.trace(session_id)
        config = SessionConfig.from_payload(_strip_backend(trace.meta.payload["config"]))
        with manager._lock:
            runner = manager.runners.get(session_id)
        if runner is not None:
            phase = runner.state.phase.value
            step_count = runner.state.step_count
            diagram = {"shapes": [s.to_record() for s in runner.state.current.shapes]}
        else:
            finals = [r for r in trace.records if r.type == "final"]
            phase = finals[-1].payload["phase"] if finals else "awaiting_step"
            step_count = max(
                (r.step for r in trace.records if r.type == "verdict" and r.step), default=0
            )
            diagram = _current_diagram_payload(trace)
        return {
            "id": session_id,
            "phase": phase,
            "step_count": step_count,
            "config": trace.meta.payload["config"],
            "instruction": config.instruction,
            "diagram": diagram,
            "render_png_base64": _render_b64(diagram, config),
        }

    # -- endpoints ---------------------------------------------------------

    @app.post("/sessions", status_code=201)
    async def create_session(sketch: UploadFile, config: str | None = Form(None)):
        payload_raw = config or "{}"
        try:
            raw_config = json.loads(payload_raw)
            if not isinstance(raw_config, dict):
                raise ValueError("config must be a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        sketch_bytes = await sketch.read()
        try:
            decode_png(sketch_bytes)
        except EncodingFailure as exc:
            raise ApiError(400, "invalid_sketch", f"sketch is not a decodable PNG: {exc}") from exc
        try:
            runner = manager.create(sketch_bytes, raw_config)
        except (GrammarError, ConfigError) as exc:
            raise ApiError(400, type(exc).__name__, str(exc)) from exc
        except (BackendUnavailable, MalformedModelOutput) as exc:
            raise ApiError(502, type(exc).__name__, str(exc)) from exc
        return _summary(runner.session_id)

    @app.get("/sessions")
    def list_sessions(phase: str | None = None):
        return {
            "sessions": [
                {
                    "id": s.session_id,
                    "created_at": s.created_at,
                    "phase": s.phase,
                    "step_count": s.step_count,
                    "instruction": s.instruction,
                }
                for s in store.list_sessions(phase)
            ]
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _summary(session_id)

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str):
        trace = manager.trace(session_id)
        return {
            "records": [
                {
                    "seq": r.seq,
                    "type": r.type,
                    "step": r.step,
                    "ts": r.ts,
                    "payload": r.payload,
                }
                for r in trace.records
            ]
        }

    @app.post("/sessions/{session_id}/run")
    def run(session_id: str, steps: int = 1):
        if steps < 1:
            raise ApiError(400, "invalid_steps", f"steps must be >= 1, got {steps}")
        runner = manager.runner(session_id)
        if runner.state.phase is not Phase.AWAITING_STEP:
            raise ApiError(
                409,
                "wrong_phase",
                f"run requires awaiting_step, session is {runner.state.phase.value}",
            )
        steps = min(steps, runner.config.max_steps - runner.state.step_count)
        steps = max(steps, 1)
        if steps == 1:
            try:
                new_records = runner.run_steps(1)
            except RunInProgress as exc:
                raise ApiError(409, "run_in_progress", str(exc)) from exc
            except (BackendUnavailable, MalformedModelOutput, GatewayError) as exc:
                raise ApiError(502, type(exc).__name__, str(exc)) from exc
            return {
                "id": session_id,
                "phase": runner.state.phase.value,
                "steps": [
                    {
                        "index": r.index,
                        "outcome": r.outcome.value,
                        "selected": r.verdict.selected,
                    }
                    for r in new_records
                ],
            }
        if runner._running:
            raise ApiError(409, "run_in_progress", session_id)
        token = manager.start_run(runner, steps)
        return JSONResponse(
            status_code=202,
            content={"id": session_id, "run_token": token, "steps_requested": steps},
        )

    @app.get("/sessions/{session_id}/steps/{index}")
    def get_step(session_id: str, index: int):
        config = _session_config(session_id)
        trace = manager.trace(session_id)
        views = _step_views(trace, config)
        view = next((v for v in views if v["index"] == index), None)
        if view is None:
            raise ApiError(404, "unknown_step", f"session has no step {index}")
        enriched = dict(view)
        enriched["candidates"] = [
            {**c, "render_png_base64": _render_b64(c["diagram"], config)}
            for c in view["candidates"]
        ]
        enriched["current_render_png_base64"] = _render_b64(view["diagram_after"], config)
        return enriched

    @app.post("/sessions/{session_id}/override")
    def post_override(session_id: str, action: dict):
        runner = manager.runner(session_id)
        try:
            override = override_from_payload(action, runner.config.canvas)
            state = runner.override(override)
        except InvalidOverride as exc:
            raise ApiError(400, "InvalidOverride", str(exc)) from exc
        except LoopPhaseError as exc:
            raise ApiError(409, "wrong_phase", str(exc)) from exc
        diagram = {"shapes": [s.to_record() for s in state.current.shapes]}
        return {
            "id": session_id,
            "phase": state.phase.value,
            "step_count": state.step_count,
            "diagram": diagram,
            "render_png_base64": _b64(runner.current_render_png()),
        }

    @app.get("/sessions/{session_id}/export.svg")
    def export_svg(session_id: str):
        config = _session_config(session_id)
        trace = manager.trace(session_id)
        diagram_raw = _current_diagram_payload(trace)
        diagram = parse_diagram(json.dumps(diagram_raw), config.canvas)
        return Response(content=compile_svg(diagram).text, media_type="image/svg+xml")

    @app.get("/sessions/{session_id}/render.png")
    def render_png(session_id: str):
        config = _session_config(session_id)
        trace = manager.trace(session_id)
        diagram_raw = _current_diagram_payload(trace)
        diagram = parse_diagram(json.dumps(diagram_raw), config.canvas)
        png = encode_png(render_image(diagram, config.render_supersample))
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{session_id}/sketch.png")
    def sketch_png(session_id: str):
        try:
            return Response(content=store.sketch_png(session_id), media_type="image/png")
        except UnknownSession as exc:
            raise ApiError(404, "unknown_session", session_id) from exc

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str):
        if not store.session_exists(session_id):
            raise ApiError(404, "unknown_session", session_id)
        with manager._lock:
            runner = manager.runners.get(session_id)

        live: "queue.Queue[TraceRecord]" = queue.Queue()
        listener = live.put
        if runner is not None:
            runner.add_listener(listener)

        def stream() -> Iterator[str]:
            last_seq = -1
            terminal = False
            try:
                for record in store.load_trace(session_id).records:
                    last_seq = record.seq
                    yield _sse_format(record)
                    if record.type == "final":
                        terminal = True
                if terminal or runner is None:
                    return
                idle = 0
                while True:
                    try:
                        record = live.get(timeout=_EVENT_POLL_S)
                    except queue.Empty:
                        idle += 1
                        if idle % _EVENT_KEEPALIVE_EVERY == 0:
                            yield ": keep-alive\n\n"
                        continue
                    idle = 0
                    if record.seq <= last_seq:
                        continue
                    last_seq = record.seq
                    yield _sse_format(record)
                    if record.type == "final":
                        return
            finally:
                if runner is not None:
                    runner.remove_listener(listener)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    return app
