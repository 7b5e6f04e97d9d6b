"""Shared vocabulary for the three model roles and their backends.

A gateway exposes the critic, synthesizer and judge roles behind one
interface so the loop never knows whether it is talking to a remote
VLM/LLM, a replayed trace, or the target-aware oracle.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from ..grammar import Diagram
from ..render.raster import RasterImage

#: Hard ceiling on discrepancies per critique, whatever the model emits.
MAX_DISCREPANCIES = 3


class ModelRole(str, Enum):
    CRITIC = "critic"
    SYNTHESIZER = "synthesizer"
    JUDGE = "judge"


class Strategy(str, Enum):
    """Candidate synthesis strategies, one candidate per strategy per step."""

    CONSERVATIVE = "conservative"
    MODERATE = "moderate"
    AGGRESSIVE = "aggressive"
    ALTERNATIVE = "alternative"
    FOCUSED = "focused"


STRATEGY_ORDER: tuple[Strategy, ...] = tuple(Strategy)


class GatewayError(RuntimeError):
    pass


class BackendUnavailable(GatewayError):
    """The model endpoint could not be reached after the retry budget."""


class MalformedModelOutput(GatewayError):
    """The model's output stayed unusable after all repair re-asks."""


@dataclass(frozen=True)
class CritiqueReport:
    """Scene description, at most three discrepancies, one suggestion each.

    An empty discrepancy list is the explicit no-differences marker; the
    loop treats it as convergence.
    """

    scene_description: str
    discrepancies: tuple[str, ...] = ()
    suggestions: tuple[str, ...] = ()
    raw_response: str = ""

    def __post_init__(self) -> None:
        capped = tuple(self.discrepancies)[:MAX_DISCREPANCIES]
        suggestions = tuple(self.suggestions)
        if len(suggestions) > len(capped):
            suggestions = suggestions[: len(capped)]
        object.__setattr__(self, "discrepancies", capped)
        object.__setattr__(self, "suggestions", suggestions)

    @property
    def converged(self) -> bool:
        return not self.discrepancies


@dataclass(frozen=True)
class CandidateProgram:
    strategy: Strategy
    diagram: Diagram
    raw_response: str = ""
    repair_count: int = 0


@dataclass(frozen=True)
class JudgeVerdict:
    """selected == 0 keeps the current image (revert); 1..N picks a candidate."""

    selected: int
    rationale: str = ""
    raw_response: str = ""


@dataclass(frozen=True)
class FailureFeedback:
    """What a reverted step tried, fed back to the critic verbatim."""

    step: int
    rejected_suggestions: tuple[str, ...] = ()
    rejected_deltas: tuple[str, ...] = ()

    def to_payload(self) -> dict:
        return {
            "step": self.step,
            "rejected_suggestions": list(self.rejected_suggestions),
            "rejected_deltas": list(self.rejected_deltas),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "FailureFeedback":
        return cls(
            step=int(payload["step"]),
            rejected_suggestions=tuple(payload.get("rejected_suggestions", ())),
            rejected_deltas=tuple(payload.get("rejected_deltas", ())),
        )


@dataclass
class GatewayCallLog:
    """Optional spy hook: records what each critique call was asked.

    Attached by tests and by the service debug view; backends that assemble
    prompts store the rendered prompt text here.
    """

    critique_prompts: list[str] = field(default_factory=list)


class ModelGateway(ABC):
    """Uniform interface to the critic, synthesizer and judge roles."""

    call_log: GatewayCallLog | None = None

    @abstractmethod
    def describe_initial(self, sketch: RasterImage, instruction: str) -> CritiqueReport:
        """Describe the sketch in terms of the available primitives."""

    @abstractmethod
    def critique(
        self,
        sketch: RasterImage,
        current: RasterImage,
        instruction: str,
        failures: Sequence[FailureFeedback] = (),
    ) -> CritiqueReport:
        """Compare sketch and current render; name up to three discrepancies."""

    @abstractmethod
    def synthesize(
        self,
        current_program: Diagram,
        critique: CritiqueReport,
        strategy: Strategy,
        grammar_text: str,
    ) -> CandidateProgram:
        """Produce one candidate program under the given strategy."""

    @abstractmethod
    def judge(
        self,
        sketch: RasterImage,
        current: RasterImage,
        candidates: Sequence[RasterImage],
    ) -> JudgeVerdict:
        """Pick the best image among the current render and all candidates."""
