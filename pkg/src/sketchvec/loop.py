"""The critique -> candidates -> judge optimization loop.

One step: render the current program, ask the critic for up to three
discrepancies, synthesize one candidate per enabled strategy, render them
all, and let the judge pick among {current} and the candidates. Choosing
the current image reverts the step and feeds the failed suggestions back
to the critic; choosing a candidate commits it. The loop converges when
the critic reports no discrepancies.

State handling is functional: every operation returns a new LoopState, so
a failed step leaves the caller's state bit-identical. Trace records are
emitted to the recorder only after a step fully succeeded, immediately
before the new state is returned (write-ahead relative to the commit).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Protocol, Sequence

from .gateway.base import (
    CandidateProgram,
    CritiqueReport,
    FailureFeedback,
    JudgeVerdict,
    ModelGateway,
    STRATEGY_ORDER,
)
from .gateway.prompts import grammar_reference
from .grammar import Canvas, Diagram, GrammarError, diff_diagrams
from .render.raster import RasterImage, render_image

#: The experiment instruction used when a session does not supply one.
DEFAULT_INSTRUCTION = (
    "Stick to the text instruction shown on the image. The color text "
    "refers to the fill color. Do not include any text in the final diagram."
)


class Phase(str, Enum):
    INITIALIZING = "initializing"
    AWAITING_STEP = "awaiting_step"
    RUNNING_STEP = "running_step"
    AWAITING_HUMAN = "awaiting_human"
    CONVERGED = "converged"
    EXHAUSTED = "exhausted"
    FAILED = "failed"


TERMINAL_PHASES = frozenset({Phase.CONVERGED, Phase.EXHAUSTED, Phase.FAILED})


class Outcome(str, Enum):
    ACCEPTED = "accepted"
    REVERTED = "reverted"
    OVERRIDDEN = "overridden"


class LoopError(RuntimeError):
    pass


class LoopPhaseError(LoopError):
    """Operation called in a phase that does not allow it."""


class InitialProgramInvalid(LoopError):
    """No valid initial program could be synthesized within the repair budget."""


class InvalidOverride(LoopError):
    """Human override referenced a bad candidate or an invalid program."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    canvas: Canvas
    instruction: str = DEFAULT_INSTRUCTION
    max_steps: int = 10
    candidate_count: int = 5
    equivalence_threshold: float = 0.01
    max_consecutive_reverts: int = 3
    render_supersample: int = 2
    synthesize_workers: int = 1

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if not 1 <= self.candidate_count <= len(STRATEGY_ORDER):
            raise ConfigError(
                f"candidate_count must be in 1..{len(STRATEGY_ORDER)}, "
                f"got {self.candidate_count}"
            )
        if self.max_consecutive_reverts < 1:
            raise ConfigError(
                f"max_consecutive_reverts must be >= 1, "
                f"got {self.max_consecutive_reverts}"
            )
        if self.render_supersample < 1:
            raise ConfigError("render_supersample must be >= 1")
        if self.synthesize_workers < 1:
            raise ConfigError("synthesize_workers must be >= 1")

    @property
    def strategies(self):
        return STRATEGY_ORDER[: self.candidate_count]

    def to_payload(self) -> dict:
        return {
            "canvas": {"width": self.canvas.width, "height": self.canvas.height},
            "instruction": self.instruction,
            "max_steps": self.max_steps,
            "candidate_count": self.candidate_count,
            "equivalence_threshold": self.equivalence_threshold,
            "max_consecutive_reverts": self.max_consecutive_reverts,
            "render_supersample": self.render_supersample,
            "synthesize_workers": self.synthesize_workers,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "SessionConfig":
        canvas_raw = payload.get("canvas")
        if not isinstance(canvas_raw, dict):
            raise ConfigError("config needs a canvas {width, height}")
        known = {
            "instruction",
            "max_steps",
            "candidate_count",
            "equivalence_threshold",
            "max_consecutive_reverts",
            "render_supersample",
            "synthesize_workers",
        }
        unknown = set(payload) - known - {"canvas"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            canvas = Canvas(canvas_raw.get("width"), canvas_raw.get("height"))
        except GrammarError as exc:
            raise ConfigError(str(exc)) from exc
        kwargs = {k: payload[k] for k in known if k in payload}
        return cls(canvas=canvas, **kwargs)


@dataclass(frozen=True)
class StepRecord:
    index: int
    critique: CritiqueReport
    candidates: tuple[CandidateProgram, ...]
    verdict: JudgeVerdict
    outcome: Outcome
    diagram_after: Diagram


@dataclass(frozen=True)
class LoopState:
    phase: Phase
    current: Diagram
    step_count: int = 0
    consecutive_reverts: int = 0
    failures: tuple[FailureFeedback, ...] = ()
    instruction: str = DEFAULT_INSTRUCTION


class Recorder(Protocol):
    """Receives trace records; see session_store for the durable one."""

    def __call__(self, record_type: str, step: int | None, payload: dict) -> None: ...


def _null_recorder(record_type: str, step: int | None, payload: dict) -> None:
    return None


def report_payload(report: CritiqueReport) -> dict:
    return {
        "scene_description": report.scene_description,
        "discrepancies": list(report.discrepancies),
        "suggestions": list(report.suggestions),
        "raw_response": report.raw_response,
    }


def diagram_payload(d: Diagram) -> dict:
    return {"shapes": [s.to_record() for s in d.shapes]}


def initialize(
    sketch: RasterImage,
    config: SessionConfig,
    gateway: ModelGateway,
    recorder: Recorder = _null_recorder,
) -> LoopState:
    """Bootstrap: describe the sketch, synthesize the starting program."""
    from .gateway.base import MalformedModelOutput

    description = gateway.describe_initial(sketch, config.instruction)
    try:
        candidate = gateway.synthesize(
            Diagram(config.canvas),
            description,
            STRATEGY_ORDER[0],
            grammar_reference(config.canvas),
        )
    except (GrammarError, MalformedModelOutput) as exc:
        raise InitialProgramInvalid(f"initial program rejected: {exc}") from exc
    recorder("critique", 0, {"report": report_payload(description)})
    recorder("init_program", 0, {"diagram": diagram_payload(candidate.diagram)})
    return LoopState(
        phase=Phase.AWAITING_STEP,
        current=candidate.diagram,
        instruction=config.instruction,
    )


def _synthesize_all(
    state: LoopState,
    critique: CritiqueReport,
    config: SessionConfig,
    gateway: ModelGateway,
) -> list[CandidateProgram]:
    grammar_text = grammar_reference(config.canvas)
    strategies = config.strategies
    if config.synthesize_workers == 1 or len(strategies) == 1:
        return [
            gateway.synthesize(state.current, critique, strategy, grammar_text)
            for strategy in strategies
        ]
    workers = min(config.synthesize_workers, len(strategies))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(gateway.synthesize, state.current, critique, strategy, grammar_text)
            for strategy in strategies
        ]
        return [f.result() for f in futures]


def _candidate_delta_summary(current: Diagram, candidate: CandidateProgram) -> str:
    lines = diff_diagrams(current, candidate.diagram).summary_lines()
    body = "; ".join(lines) if lines else "no change"
    return f"[{candidate.strategy.value}] {body}"


def run_step(
    state: LoopState,
    sketch: RasterImage,
    config: SessionConfig,
    gateway: ModelGateway,
    recorder: Recorder = _null_recorder,
) -> tuple[LoopState, StepRecord | None]:
    """Execute one optimization step; returns (new state, record).

    A critique reporting no discrepancies converges the session without
    consuming a step (record is None). Gateway errors propagate and leave
    the caller's state untouched.
    """
    if state.phase is not Phase.AWAITING_STEP:
        raise LoopPhaseError(f"run_step requires awaiting_step, phase is {state.phase.value}")
    step_index = state.step_count + 1
    current_img = render_image(state.current, config.render_supersample)
    critique = gateway.critique(sketch, current_img, state.instruction, state.failures)

    if critique.converged:
        recorder("critique", step_index, {"report": report_payload(critique)})
        return replace(state, phase=Phase.CONVERGED), None

    candidates = _synthesize_all(state, critique, config, gateway)
    renders = [
        render_image(c.diagram, config.render_supersample) for c in candidates
    ]
    verdict = gateway.judge(sketch, current_img, renders)
    if not 0 <= verdict.selected <= len(candidates):
        raise LoopError(
            f"verdict index {verdict.selected} outside 0..{len(candidates)}"
        )

    if verdict.selected >= 1:
        outcome = Outcome.ACCEPTED
        new_current = candidates[verdict.selected - 1].diagram
        consecutive_reverts = 0
        failures = state.failures
        revert_payload = None
    else:
        outcome = Outcome.REVERTED
        new_current = state.current
        consecutive_reverts = state.consecutive_reverts + 1
        feedback = FailureFeedback(
            step=step_index,
            rejected_suggestions=critique.suggestions,
            rejected_deltas=tuple(
                _candidate_delta_summary(state.current, c) for c in candidates
            ),
        )
        failures = state.failures + (feedback,)
        revert_payload = feedback.to_payload()

    recorder("critique", step_index, {"report": report_payload(critique)})
    for candidate in candidates:
        recorder(
            "candidate",
            step_index,
            {
                "strategy": candidate.strategy.value,
                "diagram": diagram_payload(candidate.diagram),
                "repair_count": candidate.repair_count,
            },
        )
    recorder(
        "verdict",
        step_index,
        {
            "selected": verdict.selected,
            "rationale": verdict.rationale,
            "raw_response": verdict.raw_response,
        },
    )
    if revert_payload is not None:
        recorder("revert", step_index, {"failures": revert_payload})

    if step_index >= config.max_steps or consecutive_reverts >= config.max_consecutive_reverts:
        phase = Phase.EXHAUSTED
    else:
        phase = Phase.AWAITING_STEP
    new_state = replace(
        state,
        phase=phase,
        current=new_current,
        step_count=step_index,
        consecutive_reverts=consecutive_reverts,
        failures=failures,
    )
    record = StepRecord(
        index=step_index,
        critique=critique,
        candidates=tuple(candidates),
        verdict=verdict,
        outcome=outcome,
        diagram_after=new_current,
    )
    return new_state, record


def run_to_completion(
    state: LoopState,
    sketch: RasterImage,
    config: SessionConfig,
    gateway: ModelGateway,
    recorder: Recorder = _null_recorder,
    on_step: Callable[[LoopState, StepRecord], None] | None = None,
) -> tuple[LoopState, list[StepRecord]]:
    """Repeat run_step until converged, exhausted or failed."""
    records: list[StepRecord] = []
    while state.phase is Phase.AWAITING_STEP:
        state, record = run_step(state, sketch, config, gateway, recorder)
        if record is not None:
            records.append(record)
            if on_step is not None:
                on_step(state, record)
    return state, records


# ---------------------------------------------------------------------------
# Human overrides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectCandidate:
    step: int
    index: int  # judge numbering: 1..N

    def to_payload(self) -> dict:
        return {"action": "select_candidate", "step": self.step, "index": self.index}


@dataclass(frozen=True)
class EditProgram:
    diagram: Diagram

    def to_payload(self) -> dict:
        return {"action": "edit_program", "diagram": diagram_payload(self.diagram)}


@dataclass(frozen=True)
class InjectInstruction:
    text: str

    def to_payload(self) -> dict:
        return {"action": "inject_instruction", "text": self.text}


@dataclass(frozen=True)
class AcceptAsFinal:
    def to_payload(self) -> dict:
        return {"action": "accept_as_final"}


Override = SelectCandidate | EditProgram | InjectInstruction | AcceptAsFinal

_OVERRIDE_PHASES = frozenset({Phase.AWAITING_STEP, Phase.AWAITING_HUMAN})


@dataclass(frozen=True)
class OverrideResult:
    state: LoopState
    updated_record: StepRecord | None = None


def apply_override(
    state: LoopState,
    override: Override,
    step_records: Sequence[StepRecord] = (),
) -> OverrideResult:
    """Apply a human action; the human outranks the judge."""
    if state.phase not in _OVERRIDE_PHASES:
        raise LoopPhaseError(
            f"overrides require awaiting_step or awaiting_human, "
            f"phase is {state.phase.value}"
        )
    if isinstance(override, SelectCandidate):
        record = next((r for r in step_records if r.index == override.step), None)
        if record is None:
            raise InvalidOverride(f"no step {override.step} on record")
        if not 1 <= override.index <= len(record.candidates):
            raise InvalidOverride(
                f"candidate index {override.index} outside "
                f"1..{len(record.candidates)} for step {override.step}"
            )
        chosen = record.candidates[override.index - 1].diagram
        new_state = replace(
            state, current=chosen, consecutive_reverts=0
        )
        return OverrideResult(
            state=new_state,
            updated_record=replace(record, outcome=Outcome.OVERRIDDEN, diagram_after=chosen),
        )
    if isinstance(override, EditProgram):
        if override.diagram.canvas != state.current.canvas:
            raise InvalidOverride("edited program targets a different canvas")
        return OverrideResult(state=replace(state, current=override.diagram))
    if isinstance(override, InjectInstruction):
        text = override.text.strip()
        if not text:
            raise InvalidOverride("injected instruction is empty")
        return OverrideResult(
            state=replace(state, instruction=state.instruction + "\n" + text)
        )
    if isinstance(override, AcceptAsFinal):
        return OverrideResult(state=replace(state, phase=Phase.CONVERGED))
    raise InvalidOverride(f"unknown override {override!r}")


def override_from_payload(payload: dict, canvas: Canvas) -> Override:
    """Parse the JSON override action used by the HTTP API and the trace."""
    from .grammar import parse_diagram
    import json as _json

    if not isinstance(payload, dict):
        raise InvalidOverride("override payload must be an object")
    action = payload.get("action")
    if action == "select_candidate":
        try:
            return SelectCandidate(step=int(payload["step"]), index=int(payload["index"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidOverride(f"bad select_candidate payload: {exc}") from exc
    if action == "edit_program":
        raw = payload.get("diagram")
        if not isinstance(raw, dict):
            raise InvalidOverride("edit_program needs a diagram object")
        try:
            diagram = parse_diagram(_json.dumps(raw), canvas)
        except GrammarError as exc:
            raise InvalidOverride(f"invalid program: {exc}") from exc
        return EditProgram(diagram=diagram)
    if action == "inject_instruction":
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            raise InvalidOverride("inject_instruction needs non-empty text")
        return InjectInstruction(text=text)
    if action == "accept_as_final":
        return AcceptAsFinal()
    raise InvalidOverride(f"unknown override action {action!r}")
