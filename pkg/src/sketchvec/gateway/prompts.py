"""Prompt assembly for the remote model backends.

Two rules shape every prompt here: ask for few modifications per step, and
ask for qualitative, relational descriptions (anchored on other primitives
or the canvas) instead of exact numbers. Models are far more reliable at
"the blue rectangle should just touch the red circle" than at estimating
pixel coordinates, and the loop's judge filters whatever still goes wrong.
"""

from __future__ import annotations

from typing import Sequence

from ..grammar import Canvas
from .base import FailureFeedback, Strategy

#: Marker the critic must emit when sketch and render already agree.
NO_DIFFERENCES_MARKER = "NO_DIFFERENCES"

#: One block per previously reverted step inside the critic prompt.
FAILURE_BLOCK_HEADER = "[rejected step"


def grammar_reference(canvas: Canvas) -> str:
    """The closed shape vocabulary, rendered for a synthesizer prompt."""
    return f"""Canvas size: {canvas.width} x {canvas.height} pixels.
Coordinates: origin (0,0) at the top-left, +x right, +y down.
(x, y) is always the CENTER of a shape.

Shape types: "circle" | "rectangle" | "ellipse" | "triangle"
Colors (lowercase only): "red" | "green" | "blue" | "yellow" | "purple" | "orange" | "black" | "white" | "none"
("none" disables fill or stroke respectively.)

Each shape is a JSON object:
{{
  "shape_type":   <type>,            (required)
  "x":            <num>, "y": <num>,         (center, px; default 0)
  "scale_x":      <num>, "scale_y": <num>,   (width/height; for circle/ellipse: diameters; default 1)
  "fill_color":   <color>,           (default "none")
  "stroke_color": <color>,           (default "black")
  "stroke_width": <num>,             (px, default 1)
  "rotation":     <num>              (degrees clockwise; a triangle at 0 points up; default 0)
}}

Respond with exactly one JSON object of the form:
{{"shapes": [<shape>, <shape>, ...]}}

Later shapes draw on top of earlier ones. No other fields are allowed, no
text elements exist, and color names must be lowercase."""


STRATEGY_DIRECTIVES: dict[Strategy, str] = {
    Strategy.CONSERVATIVE: (
        "Apply only the single suggested change you are most confident about; "
        "leave everything else untouched."
    ),
    Strategy.MODERATE: (
        "Apply about half of the suggested changes, picking the ones you are "
        "most confident about."
    ),
    Strategy.AGGRESSIVE: "Apply all of the suggested changes.",
    Strategy.ALTERNATIVE: (
        "Apply all of the suggested changes, but realize them through a "
        "structurally different layout choice where one exists."
    ),
    Strategy.FOCUSED: (
        "Apply only the edits that affect the single most discrepant region "
        "of the diagram; leave other regions untouched."
    ),
}


def _failure_block(failure: FailureFeedback) -> str:
    lines = [f"{FAILURE_BLOCK_HEADER} {failure.step}]"]
    if failure.rejected_suggestions:
        lines.append("  suggestions that made the result worse:")
        lines += [f"  - {text}" for text in failure.rejected_suggestions]
    if failure.rejected_deltas:
        lines.append("  edits that were rolled back:")
        lines += [f"  - {text}" for text in failure.rejected_deltas]
    return "\n".join(lines)


def critique_prompt(instruction: str, failures: Sequence[FailureFeedback]) -> str:
    parts = [
        "You are comparing a target sketch (first image) with the current "
        "rendered diagram (second image).",
        "Respond with one JSON object: "
        '{"scene_description": str, "discrepancies": [str, ...], '
        '"suggestions": [str, ...], "no_differences": bool}.',
        "1. Give a high-level description of the target scene.",
        "2. Identify the 1-3 most important discrepancies between the two "
        "images. Never list more than 3.",
        "3. For each discrepancy give one targeted modification suggestion.",
        "Describe positions and sizes qualitatively, relative to other "
        "primitives or to the canvas (for example: 'the width should be "
        "about half the canvas', 'the blue rectangle should just touch the "
        "red circle on its left'). Do not invent exact coordinates.",
        f"If the two images already match, set no_differences to true and "
        f"write {NO_DIFFERENCES_MARKER} as the scene description suffix.",
        f"Instruction for this session: {instruction}",
    ]
    if failures:
        parts.append(
            "Earlier modification attempts were rejected by the judge. "
            "Revise your suggestions instead of repeating them:"
        )
        parts += [_failure_block(f) for f in failures]
    return "\n\n".join(parts)


def describe_prompt(instruction: str) -> str:
    return "\n\n".join(
        [
            "Describe the attached target sketch strictly in terms of these "
            "primitives: circle, rectangle, ellipse, triangle.",
            "For every primitive give approximate position (relative to the "
            "canvas), approximate size, fill color and stroke color, in "
            "qualitative terms.",
            "Respond with one JSON object: "
            '{"scene_description": str, "discrepancies": [], '
            '"suggestions": [], "no_differences": false}.',
            f"Instruction for this session: {instruction}",
        ]
    )


def synthesize_prompt(
    current_program_json: str,
    scene_description: str,
    discrepancies: Sequence[str],
    suggestions: Sequence[str],
    strategy: Strategy,
    grammar_text: str,
) -> str:
    numbered = [
        f"{i + 1}. problem: {d}\n   suggestion: {s}"
        for i, (d, s) in enumerate(zip(discrepancies, suggestions))
    ]
    return "\n\n".join(
        [
            "You edit a small shape program so its render matches a target "
            "sketch. The grammar is fixed:",
            grammar_text,
            f"Scene description from the critic:\n{scene_description}",
            "Requested modifications:\n" + ("\n".join(numbered) or "(none)"),
            f"Strategy: {STRATEGY_DIRECTIVES[strategy]}",
            "Respect the critic's general description so global constraints "
            "like alignment and connectivity survive your edit.",
            f"Current program:\n{current_program_json}",
            "Respond with the complete edited program as a single JSON "
            "object. No prose.",
        ]
    )


def judge_prompt(candidate_count: int) -> str:
    return "\n\n".join(
        [
            "The first image is the target sketch. The second image is the "
            "current diagram (option 0). The following "
            f"{candidate_count} image(s) are candidate replacements "
            f"(options 1..{candidate_count}).",
            "Pick the option that best reconstructs the sketch. Choose 0 "
            "only if no candidate improves on the current diagram.",
            'Respond with one JSON object: {"selected": int, "rationale": str}.',
        ]
    )
