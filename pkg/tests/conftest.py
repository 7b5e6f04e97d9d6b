"""Shared generators and fixtures.

The random-diagram generators double as test oracles: grammar tests need
arbitrary valid programs, while loop tests need "well-spaced" scenes whose
coarse initial program matches shapes unambiguously.
"""

from __future__ import annotations

import random

import pytest

from sketchvec import Canvas, Diagram, Shape, make_shape
from sketchvec.grammar import NamedColor, ShapeType

ALL_TYPES = [t.value for t in ShapeType]
ALL_COLORS = [c.value for c in NamedColor]
PAINT_COLORS = [c.value for c in NamedColor if c is not NamedColor.NONE]


def random_shape(rng: random.Random, wild: bool = False) -> Shape:
    """One valid shape; wild=True allows off-canvas and extreme values."""
    shape_type = rng.choice(ALL_TYPES)
    if wild:
        x, y = rng.uniform(-500, 1500), rng.uniform(-500, 1500)
        scale_x = rng.uniform(0.001, 900)
        scale_y = rng.uniform(0.001, 900)
    else:
        x, y = rng.uniform(0, 200), rng.uniform(0, 200)
        scale_x = rng.uniform(4, 80)
        scale_y = rng.uniform(4, 80)
    if shape_type == "circle" and not wild:
        scale_y = scale_x
    return make_shape(
        shape_type,
        x=x,
        y=y,
        scale_x=scale_x,
        scale_y=scale_y,
        fill_color=rng.choice(ALL_COLORS),
        stroke_color=rng.choice(ALL_COLORS),
        stroke_width=rng.uniform(0, 8),
        rotation=rng.uniform(-720, 720),
    )


def random_diagram(
    rng: random.Random, canvas: Canvas | None = None, max_shapes: int = 6, wild: bool = False
) -> Diagram:
    canvas = canvas or Canvas(200, 200)
    n = rng.randint(0, max_shapes)
    return Diagram(canvas, tuple(random_shape(rng, wild) for _ in range(n)))


# -- well-spaced scenes for oracle/loop tests --------------------------------

SPACED_CANVAS = Canvas(128, 128)
_GRID_CELLS = [(col, row) for row in range(4) for col in range(4)]


def spaced_scene(rng: random.Random, n_shapes: int, canvas: Canvas = SPACED_CANVAS) -> Diagram:
    """Shapes on a jittered 4x4 grid: far enough apart that the coarse
    initial program matches each one to its own target unambiguously."""
    assert n_shapes <= len(_GRID_CELLS)
    cells = rng.sample(_GRID_CELLS, n_shapes)
    cell_w = canvas.width / 4
    cell_h = canvas.height / 4
    shapes = []
    for col, row in cells:
        shape_type = rng.choice(ALL_TYPES)
        scale_x = rng.uniform(12, 30)
        scale_y = scale_x if shape_type == "circle" else rng.uniform(12, 30)
        shapes.append(
            make_shape(
                shape_type,
                x=(col + 0.5) * cell_w + rng.uniform(-4, 4),
                y=(row + 0.5) * cell_h + rng.uniform(-4, 4),
                scale_x=scale_x,
                scale_y=scale_y,
                fill_color=rng.choice(PAINT_COLORS),
                stroke_color=rng.choice(["black", "blue", "none"]),
                stroke_width=rng.choice([1, 2]),
                rotation=rng.uniform(0, 360),
            )
        )
    return Diagram(canvas, tuple(shapes))


def snapped_scene(rng: random.Random, n_shapes: int, canvas: Canvas = SPACED_CANVAS) -> Diagram:
    """A scene the oracle's coarse initial program reproduces exactly:
    positions on the eighth-of-canvas grid, sizes on the sixteenth grid,
    rotations on quarter turns."""
    assert n_shapes <= len(_GRID_CELLS)
    cells = rng.sample(_GRID_CELLS, n_shapes)
    cell_w = canvas.width / 4
    cell_h = canvas.height / 4
    size_unit = max(canvas.width, canvas.height) / 16
    shapes = []
    for col, row in cells:
        shape_type = rng.choice(ALL_TYPES)
        scale_x = rng.choice([2, 3, 4]) * size_unit
        scale_y = scale_x if shape_type == "circle" else rng.choice([2, 3, 4]) * size_unit
        shapes.append(
            make_shape(
                shape_type,
                x=(col + 0.5) * cell_w,
                y=(row + 0.5) * cell_h,
                scale_x=scale_x,
                scale_y=scale_y,
                fill_color=rng.choice(PAINT_COLORS),
                stroke_color=rng.choice(["black", "blue"]),
                stroke_width=1,
                rotation=rng.choice([0.0, 90.0, 180.0, 270.0]),
            )
        )
    return Diagram(canvas, tuple(shapes))


#: Cost-visible fields a sub-snap perturbation survives coarsening on.
#: (Circle scales stay untouched: the coarse program ties scale_y to
#: scale_x, so a single scale perturbation would count as two field diffs.)
_PERTURBABLE = {
    "circle": ("x", "y", "rotation"),
    "rectangle": ("x", "y", "scale_x", "scale_y", "rotation"),
    "ellipse": ("x", "y", "scale_x", "scale_y", "rotation"),
    "triangle": ("x", "y", "scale_x", "scale_y", "rotation"),
}


def perturb_fields(rng: random.Random, base: Diagram, n_changes: int) -> Diagram:
    """Apply n field-level perturbations, each small enough that the coarse
    initial program still equals the unperturbed base."""
    from dataclasses import replace

    shapes = list(base.shapes)
    slots = [
        (i, name)
        for i, s in enumerate(shapes)
        for name in _PERTURBABLE[s.shape_type.value]
    ]
    chosen = rng.sample(slots, n_changes)
    for i, name in chosen:
        s = shapes[i]
        if name in ("x", "y"):
            delta = rng.choice([-1, 1]) * rng.uniform(3.0, 6.0)
        elif name in ("scale_x", "scale_y"):
            delta = rng.choice([-1, 1]) * rng.uniform(2.0, 3.5)
        else:
            delta = rng.choice([-1, 1]) * rng.uniform(20.0, 40.0)
        value = getattr(s, name) + delta
        if name == "rotation":
            value %= 360.0
        shapes[i] = replace(s, **{name: round(value, 4)})
    return base.replace_shapes(shapes)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)


# -- gateway test doubles ------------------------------------------------------


class AlwaysRevertJudge:
    """Wraps a gateway; the judge always keeps the current image."""

    def __init__(self, inner):
        self.inner = inner
        self.call_log = None

    def describe_initial(self, sketch, instruction):
        return self.inner.describe_initial(sketch, instruction)

    def critique(self, sketch, current, instruction, failures=()):
        return self.inner.critique(sketch, current, instruction, failures)

    def synthesize(self, current_program, critique, strategy, grammar_text):
        return self.inner.synthesize(current_program, critique, strategy, grammar_text)

    def judge(self, sketch, current, candidates):
        from sketchvec.gateway import JudgeVerdict

        return JudgeVerdict(selected=0, rationale="scripted: always revert")


class SpyGateway:
    """Wraps a gateway and records every call with its arguments.

    Critique calls also record the canonical rendered critic prompt so tests
    can assert exactly what the model role would have been shown.
    """

    def __init__(self, inner):
        self.inner = inner
        self.call_log = None
        self.critique_calls: list[dict] = []
        self.synthesize_calls: list[str] = []
        self.judge_calls: int = 0

    def describe_initial(self, sketch, instruction):
        return self.inner.describe_initial(sketch, instruction)

    def critique(self, sketch, current, instruction, failures=()):
        from sketchvec.gateway.prompts import critique_prompt

        self.critique_calls.append(
            {
                "instruction": instruction,
                "failures": tuple(failures),
                "prompt": critique_prompt(instruction, failures),
            }
        )
        return self.inner.critique(sketch, current, instruction, failures)

    def synthesize(self, current_program, critique, strategy, grammar_text):
        self.synthesize_calls.append(strategy.value)
        return self.inner.synthesize(current_program, critique, strategy, grammar_text)

    def judge(self, sketch, current, candidates):
        self.judge_calls += 1
        return self.inner.judge(sketch, current, candidates)
