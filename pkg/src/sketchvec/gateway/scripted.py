"""Replay backend: answers every model call from a stored session trace.

Inputs are ignored entirely — the point is bit-exact reproduction. The
loop's call order is deterministic (describe, initial synthesize, then per
step: critique, one synthesize per strategy, judge), so critiques and
verdicts replay as FIFO queues while candidates are keyed by strategy to
stay correct under concurrent synthesize calls.
"""

from __future__ import annotations

import threading
from collections import deque
from typing import Sequence

from ..grammar import Canvas, Diagram, parse_diagram, serialize_diagram
from ..render.raster import RasterImage
from .base import (
    CandidateProgram,
    CritiqueReport,
    FailureFeedback,
    GatewayError,
    JudgeVerdict,
    ModelGateway,
    Strategy,
)


class TraceExhausted(GatewayError):
    """The trace has no further record for the requested call."""


def _report_from_payload(payload: dict) -> CritiqueReport:
    return CritiqueReport(
        scene_description=payload.get("scene_description", ""),
        discrepancies=tuple(payload.get("discrepancies", ())),
        suggestions=tuple(payload.get("suggestions", ())),
        raw_response=payload.get("raw_response", ""),
    )


class ScriptedGateway(ModelGateway):
    """Deterministic replay of critiques, candidates and verdicts."""

    def __init__(self, records: Sequence, canvas: Canvas):
        self.canvas = canvas
        self._lock = threading.Lock()
        self._critiques: deque[dict] = deque()
        self._verdicts: deque[dict] = deque()
        self._candidates: deque[dict] = deque()
        self._initial_diagram: Diagram | None = None
        self._awaiting_initial = False
        for record in records:
            kind = record.type if hasattr(record, "type") else record["type"]
            payload = record.payload if hasattr(record, "payload") else record["payload"]
            if kind == "critique":
                self._critiques.append(payload["report"])
            elif kind == "candidate":
                self._candidates.append(payload)
            elif kind == "verdict":
                self._verdicts.append(payload)
            elif kind == "init_program":
                self._initial_diagram = parse_diagram(
                    serialize_diagram_payload(payload["diagram"]), canvas
                )

    def describe_initial(self, sketch: RasterImage, instruction: str) -> CritiqueReport:
        with self._lock:
            if not self._critiques:
                raise TraceExhausted("no initial description in trace")
            self._awaiting_initial = True
            return _report_from_payload(self._critiques.popleft())

    def critique(
        self,
        sketch: RasterImage,
        current: RasterImage,
        instruction: str,
        failures: Sequence[FailureFeedback] = (),
    ) -> CritiqueReport:
        with self._lock:
            if not self._critiques:
                raise TraceExhausted("trace has no further critique record")
            return _report_from_payload(self._critiques.popleft())

    def synthesize(
        self,
        current_program: Diagram,
        critique: CritiqueReport,
        strategy: Strategy,
        grammar_text: str,
    ) -> CandidateProgram:
        with self._lock:
            if self._awaiting_initial:
                self._awaiting_initial = False
                if self._initial_diagram is None:
                    raise TraceExhausted("trace has no init_program record")
                return CandidateProgram(
                    strategy=strategy,
                    diagram=self._initial_diagram,
                    raw_response=serialize_diagram(self._initial_diagram),
                )
            for i, payload in enumerate(self._candidates):
                if payload["strategy"] == strategy.value:
                    del self._candidates[i]
                    diagram = parse_diagram(
                        serialize_diagram_payload(payload["diagram"]), self.canvas
                    )
                    return CandidateProgram(
                        strategy=strategy,
                        diagram=diagram,
                        raw_response=serialize_diagram(diagram),
                        repair_count=int(payload.get("repair_count", 0)),
                    )
        raise TraceExhausted(f"trace has no further {strategy.value} candidate")

    def judge(
        self,
        sketch: RasterImage,
        current: RasterImage,
        candidates: Sequence[RasterImage],
    ) -> JudgeVerdict:
        with self._lock:
            if not self._verdicts:
                raise TraceExhausted("trace has no further verdict record")
            payload = self._verdicts.popleft()
        return JudgeVerdict(
            selected=int(payload["selected"]),
            rationale=payload.get("rationale", ""),
            raw_response=payload.get("raw_response", ""),
        )


def serialize_diagram_payload(payload: dict) -> str:
    """Trace payloads store the diagram as a JSON object; reparse strictly."""
    import json

    return json.dumps(payload)
