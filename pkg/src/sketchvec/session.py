"""Session orchestration shared by the CLI and the HTTP service.

A SessionRunner owns one session end to end: it writes every trace record
through the store before committing loop state, fans records out to live
listeners (the event stream), serializes run/override access, and exposes
renders and exports. replay_trace() re-runs a stored trace through the
scripted backend and verifies byte-exact reproduction of every diagram.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Callable

from .gateway.base import ModelGateway
from .gateway.scripted import ScriptedGateway
from .grammar import Diagram, parse_diagram, serialize_diagram
from .loop import (
    TERMINAL_PHASES,
    LoopState,
    Override,
    Phase,
    SessionConfig,
    StepRecord,
    apply_override,
    diagram_payload,
    initialize,
    override_from_payload,
    run_step,
)
from .render.raster import RasterImage, decode_png, encode_png, render_image
from .render.svg import compile_svg
from .store import SessionStore, SessionTrace, TraceRecord

RecordListener = Callable[[TraceRecord], None]


class RunInProgress(RuntimeError):
    """A second run was requested while one is executing."""


@dataclass
class SessionRunner:
    session_id: str
    store: SessionStore
    config: SessionConfig
    gateway: ModelGateway
    sketch: RasterImage
    state: LoopState
    records: list[StepRecord] = field(default_factory=list)
    _listeners: list[RecordListener] = field(default_factory=list)
    _lock: threading.RLock = field(default_factory=threading.RLock)
    # Guards the running flag only, so a second run fails fast with 409
    # instead of queueing behind the step currently holding _lock.
    _flag_lock: threading.Lock = field(default_factory=threading.Lock)
    _running: bool = False
    _finalized: bool = False

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(
        cls,
        store: SessionStore,
        config: SessionConfig,
        sketch_png: bytes,
        gateway: ModelGateway,
        config_payload_extra: dict | None = None,
    ) -> "SessionRunner":
        config_payload = dict(config.to_payload())
        if config_payload_extra:
            config_payload.update(config_payload_extra)
        session_id = store.create_session(config_payload, sketch_png)
        runner = cls(
            session_id=session_id,
            store=store,
            config=config,
            gateway=gateway,
            sketch=decode_png(sketch_png),
            state=LoopState(
                phase=Phase.INITIALIZING,
                current=Diagram(config.canvas),
                instruction=config.instruction,
            ),
        )
        try:
            runner.state = initialize(runner.sketch, config, gateway, runner._record)
        except Exception:
            runner.state = replace(runner.state, phase=Phase.FAILED)
            runner._finalize()
            raise
        return runner

    def add_listener(self, listener: RecordListener) -> None:
        with self._lock:
            self._listeners.append(listener)

    def remove_listener(self, listener: RecordListener) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)

    def _record(self, record_type: str, step: int | None, payload: dict) -> None:
        record = self.store.append(self.session_id, record_type, step, payload)
        for listener in list(self._listeners):
            listener(record)

    # -- execution ------------------------------------------------------------

    def run_steps(self, k: int) -> list[StepRecord]:
        """Run up to k steps (bounded by the remaining budget and phase)."""
        if k < 1:
            raise ValueError(f"steps must be >= 1, got {k}")
        with self._flag_lock:
            if self._running:
                raise RunInProgress(self.session_id)
            self._running = True
        new_records: list[StepRecord] = []
        try:
            for _ in range(k):
                with self._lock:
                    if self.state.phase is not Phase.AWAITING_STEP:
                        break
                    state, record = run_step(
                        self.state, self.sketch, self.config, self.gateway, self._record
                    )
                    self.state = state
                    if record is not None:
                        self.records.append(record)
                        new_records.append(record)
                    if state.phase in TERMINAL_PHASES:
                        self._finalize()
                        break
            return new_records
        except Exception:
            with self._lock:
                self.state = replace(self.state, phase=Phase.FAILED)
                self._finalize()
            raise
        finally:
            with self._flag_lock:
                self._running = False

    def override(self, action: Override) -> LoopState:
        # Waits at most one step: run_steps holds the lock per step, so an
        # override lands exactly on a step boundary.
        with self._lock:
            result = apply_override(self.state, action, self.records)
            self._record(
                "override", self.state.step_count, {"action": action.to_payload()}
            )
            self.state = result.state
            if result.updated_record is not None:
                for i, record in enumerate(self.records):
                    if record.index == result.updated_record.index:
                        self.records[i] = result.updated_record
                        break
            if self.state.phase in TERMINAL_PHASES:
                self._finalize()
            return self.state

    def _finalize(self) -> None:
        if self._finalized:
            return
        self._finalized = True
        self._record(
            "final",
            None,
            {
                "phase": self.state.phase.value,
                "diagram": diagram_payload(self.state.current),
            },
        )

    # -- views -----------------------------------------------------------------

    def step_record(self, index: int) -> StepRecord | None:
        return next((r for r in self.records if r.index == index), None)

    def current_render(self) -> RasterImage:
        return render_image(self.state.current, self.config.render_supersample)

    def current_render_png(self) -> bytes:
        return encode_png(self.current_render())

    def export_svg(self) -> str:
        return compile_svg(self.state.current).text


# ---------------------------------------------------------------------------
# Trace replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplayResult:
    state: LoopState
    records: list[StepRecord]
    produced: list[tuple[str, int | None, dict]]
    mismatches: list[str]

    @property
    def faithful(self) -> bool:
        return not self.mismatches


def _diagram_text(payload: dict, config: SessionConfig) -> str:
    import json

    return serialize_diagram(parse_diagram(json.dumps(payload), config.canvas))


def replay_trace(trace: SessionTrace) -> ReplayResult:
    """Re-run a stored trace through the scripted backend and compare.

    Every produced diagram payload (initial program, candidates, final) must
    reproduce the stored one byte-exactly after canonical serialization.
    """
    meta = trace.meta
    config = SessionConfig.from_payload(
        {
            k: v
            for k, v in meta.payload["config"].items()
            if k
            in {
                "canvas",
                "instruction",
                "max_steps",
                "candidate_count",
                "equivalence_threshold",
                "max_consecutive_reverts",
                "render_supersample",
                "synthesize_workers",
            }
        }
    )
    gateway = ScriptedGateway(trace.records, config.canvas)
    blank = RasterImage(
        config.canvas.width,
        config.canvas.height,
        b"\xff" * (config.canvas.width * config.canvas.height * 4),
    )
    produced: list[tuple[str, int | None, dict]] = []

    def recorder(record_type: str, step: int | None, payload: dict) -> None:
        produced.append((record_type, step, payload))

    state = initialize(blank, config, gateway, recorder)
    records: list[StepRecord] = []
    remaining = [
        r
        for r in trace.records
        if r.type in {"critique", "candidate", "verdict", "revert", "override", "final"}
    ]
    # initialize consumed the step-0 critique; skip it.
    cursor = 1
    while cursor < len(remaining):
        record = remaining[cursor]
        if record.type == "final":
            break
        if record.type == "override":
            action = override_from_payload(record.payload["action"], config.canvas)
            result = apply_override(state, action, records)
            state = result.state
            if result.updated_record is not None:
                for i, rec in enumerate(records):
                    if rec.index == result.updated_record.index:
                        records[i] = result.updated_record
            recorder("override", record.step, record.payload)
            cursor += 1
            continue
        if record.type == "critique":
            state, step_record = run_step(state, blank, config, gateway, recorder)
            if step_record is None:
                cursor += 1  # converged critique only
                continue
            records.append(step_record)
            consumed = 2 + len(step_record.candidates)  # critique + cands + verdict
            if step_record.outcome.value == "reverted":
                consumed += 1
            cursor += consumed
            continue
        raise ValueError(f"unexpected trace record {record.type} at position {cursor}")

    recorder("final", None, {"phase": state.phase.value, "diagram": diagram_payload(state.current)})

    mismatches: list[str] = []
    originals = [
        (r.type, r.step, r.payload)
        for r in trace.records
        if r.type in {"init_program", "candidate", "final"}
    ]
    replays = [p for p in produced if p[0] in {"init_program", "candidate", "final"}]
    if len(originals) != len(replays):
        mismatches.append(
            f"record count differs: trace has {len(originals)} diagram records, "
            f"replay produced {len(replays)}"
        )
    for (o_type, o_step, o_payload), (r_type, r_step, r_payload) in zip(originals, replays):
        if (o_type, o_step) != (r_type, r_step):
            mismatches.append(
                f"record order differs: trace {o_type}@{o_step} vs replay {r_type}@{r_step}"
            )
            continue
        o_text = _diagram_text(o_payload["diagram"], config)
        r_text = _diagram_text(r_payload["diagram"], config)
        if o_text != r_text:
            mismatches.append(f"{o_type}@{o_step}: diagram differs")
    return ReplayResult(state=state, records=records, produced=produced, mismatches=mismatches)
