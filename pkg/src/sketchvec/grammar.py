"""Shape-program grammar: parse, validate, normalize, serialize, diff.

A diagram program is a closed JSON vocabulary: a top-level object holding a
single "shapes" array, each entry one of four primitives with eight known
fields. Everything outside the vocabulary is a hard error — the synthesis
loop depends on malformed programs being rejected loudly, never coerced.

Coordinate convention: origin at the canvas top-left, +x right, +y down.
(x, y) is always the *center* of a shape; for circles and ellipses the
scales are diameters. Rotation is degrees, clockwise.

All values are immutable after construction and every operation here is a
pure function, so concurrent use needs no synchronization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Mapping


class ShapeType(str, Enum):
    CIRCLE = "circle"
    RECTANGLE = "rectangle"
    ELLIPSE = "ellipse"
    TRIANGLE = "triangle"


class NamedColor(str, Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    YELLOW = "yellow"
    PURPLE = "purple"
    ORANGE = "orange"
    BLACK = "black"
    WHITE = "white"
    NONE = "none"


#: SVG 1.1 named-color values; what any standard viewer shows for the name.
COLOR_RGB: dict[NamedColor, tuple[int, int, int]] = {
    NamedColor.RED: (255, 0, 0),
    NamedColor.GREEN: (0, 128, 0),
    NamedColor.BLUE: (0, 0, 255),
    NamedColor.YELLOW: (255, 255, 0),
    NamedColor.PURPLE: (128, 0, 128),
    NamedColor.ORANGE: (255, 165, 0),
    NamedColor.BLACK: (0, 0, 0),
    NamedColor.WHITE: (255, 255, 255),
}

#: Grammar field order; serialization emits keys exactly in this order.
SHAPE_FIELDS = (
    "shape_type",
    "x",
    "y",
    "scale_x",
    "scale_y",
    "fill_color",
    "stroke_color",
    "stroke_width",
    "rotation",
)

_NUMERIC_FIELDS = ("x", "y", "scale_x", "scale_y", "stroke_width", "rotation")
_COLOR_FIELDS = ("fill_color", "stroke_color")


class GrammarError(ValueError):
    """Base class for shape-program validation failures.

    ``path`` is a JSON-pointer-style location of the offending element,
    e.g. ``/shapes/3/fill_color``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.reason = message
        super().__init__(f"{path}: {message}" if path else message)


class MalformedJson(GrammarError):
    pass


class UnknownShapeType(GrammarError):
    pass


class UnknownColor(GrammarError):
    pass


class MissingRequiredField(GrammarError):
    pass


class NonPositiveScale(GrammarError):
    pass


class UnknownField(GrammarError):
    pass


class InvalidFieldValue(GrammarError):
    pass


class CanvasMismatch(GrammarError):
    pass


@dataclass(frozen=True)
class Canvas:
    """Drawing surface in pixels. Origin top-left, +x right, +y down."""

    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise InvalidFieldValue(
                    f"canvas {name} must be a positive integer, got {value!r}"
                )

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class Shape:
    """One normalized primitive. Construct via normalize_shape or make_shape."""

    shape_type: ShapeType
    x: float = 0.0
    y: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    fill_color: NamedColor = NamedColor.NONE
    stroke_color: NamedColor = NamedColor.BLACK
    stroke_width: float = 1.0
    rotation: float = 0.0

    def to_record(self) -> dict[str, Any]:
        """Plain-dict form in grammar field order (JSON-ready values)."""
        return {
            "shape_type": self.shape_type.value,
            "x": self.x,
            "y": self.y,
            "scale_x": self.scale_x,
            "scale_y": self.scale_y,
            "fill_color": self.fill_color.value,
            "stroke_color": self.stroke_color.value,
            "stroke_width": self.stroke_width,
            "rotation": self.rotation,
        }


@dataclass(frozen=True)
class Diagram:
    """A canvas plus an ordered shape list (painter's order: later on top)."""

    canvas: Canvas
    shapes: tuple[Shape, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.shapes, tuple):
            object.__setattr__(self, "shapes", tuple(self.shapes))

    def replace_shapes(self, shapes: Iterable[Shape]) -> "Diagram":
        return Diagram(self.canvas, tuple(shapes))


def _quantize(value: float) -> float:
    """Round to the grammar's 4-decimal serialization precision."""
    q = round(float(value), 4)
    return 0.0 if q == 0 else q  # avoid -0.0


def format_number(value: float) -> str:
    """Canonical number text: up to 4 decimal places, trailing zeros trimmed."""
    text = f"{value:.4f}".rstrip("0").rstrip(".")
    if text in ("", "-0"):
        return "0"
    return text


def _require_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidFieldValue(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise InvalidFieldValue(f"number must be finite, got {value!r}", path)
    return float(value)


def _require_color(value: Any, path: str) -> NamedColor:
    try:
        if not isinstance(value, str):
            raise ValueError
        return NamedColor(value)
    except ValueError:
        raise UnknownColor(f"unknown color {value!r} (lowercase names only)", path) from None


def normalize_shape(record: Mapping[str, Any], path: str = "") -> Shape:
    """Fill grammar defaults, validate the closed vocabulary, canonicalize.

    Rotation is reduced modulo 360 into [0, 360); all numeric fields are
    quantized to 4 decimal places so that serialization round-trips exactly.
    Normalization is idempotent.
    """
    if not isinstance(record, Mapping):
        raise InvalidFieldValue(f"shape must be a JSON object, got {record!r}", path)
    for key in record:
        if key not in SHAPE_FIELDS:
            raise UnknownField(f"unknown field {key!r}", f"{path}/{key}")
    if "shape_type" not in record:
        raise MissingRequiredField("shape_type is required", path)
    raw_type = record["shape_type"]
    try:
        if not isinstance(raw_type, str):
            raise ValueError
        shape_type = ShapeType(raw_type)
    except ValueError:
        raise UnknownShapeType(
            f"unknown shape_type {raw_type!r}", f"{path}/shape_type"
        ) from None

    values: dict[str, Any] = {"shape_type": shape_type}
    for name in _NUMERIC_FIELDS:
        if name in record:
            values[name] = _quantize(_require_number(record[name], f"{path}/{name}"))
    for name in _COLOR_FIELDS:
        if name in record:
            values[name] = _require_color(record[name], f"{path}/{name}")

    for name in ("scale_x", "scale_y"):
        if name in values and values[name] <= 0:
            raise NonPositiveScale(
                f"{name} must be positive, got {record[name]!r}", f"{path}/{name}"
            )
    if values.get("stroke_width", 1.0) < 0:
        raise InvalidFieldValue(
            f"stroke_width must be >= 0, got {record['stroke_width']!r}",
            f"{path}/stroke_width",
        )
    if "rotation" in values:
        values["rotation"] = _quantize(_quantize(values["rotation"]) % 360.0) % 360.0
    return Shape(**values)


def make_shape(shape_type: ShapeType | str, **fields: Any) -> Shape:
    """Programmatic shape construction with the same normalization as parsing."""
    record: dict[str, Any] = {"shape_type": ShapeType(shape_type).value}
    for key, value in fields.items():
        if isinstance(value, NamedColor):
            value = value.value
        record[key] = value
    return normalize_shape(record)


def diagram_warnings(d: Diagram) -> list[str]:
    """Non-fatal validation findings.

    The grammar calls the shape "circle" yet carries two independent
    diameters; when they differ we accept the shape and render with
    scale_x, but flag it so a human can see the synthesizer misbehaving.
    """
    findings = []
    for i, s in enumerate(d.shapes):
        if s.shape_type is ShapeType.CIRCLE and s.scale_x != s.scale_y:
            findings.append(
                f"/shapes/{i}: circle has scale_x {format_number(s.scale_x)} != "
                f"scale_y {format_number(s.scale_y)}; scale_x is used as the diameter"
            )
    return findings


def parse_diagram(text: str | bytes, canvas: Canvas) -> Diagram:
    """Parse a UTF-8 JSON shape program into a normalized Diagram.

    The canvas is supplied out-of-band (session configuration); the program
    itself carries only the shape list.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"not valid UTF-8: {exc}") from None

    def _reject_constant(name: str) -> Any:
        raise MalformedJson(f"non-finite number {name!r} is not valid JSON")

    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except MalformedJson:
        raise
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from None

    if not isinstance(doc, dict):
        raise InvalidFieldValue(f"top level must be a JSON object, got {doc!r}")
    for key in doc:
        if key != "shapes":
            raise UnknownField(f"unknown field {key!r}", f"/{key}")
    if "shapes" not in doc:
        raise MissingRequiredField("top-level 'shapes' array is required", "/shapes")
    raw_shapes = doc["shapes"]
    if not isinstance(raw_shapes, list):
        raise InvalidFieldValue("'shapes' must be an array", "/shapes")
    shapes = tuple(
        normalize_shape(entry, f"/shapes/{i}") for i, entry in enumerate(raw_shapes)
    )
    return Diagram(canvas, shapes)


def serialize_shape(s: Shape) -> str:
    parts = []
    for name in SHAPE_FIELDS:
        value = getattr(s, name)
        if isinstance(value, Enum):
            rendered = json.dumps(value.value)
        else:
            rendered = format_number(value)
        parts.append(f'"{name}": {rendered}')
    return "{" + ", ".join(parts) + "}"


def serialize_diagram(d: Diagram) -> str:
    """Canonical (byte-stable) program text.

    Every field is emitted explicitly in grammar order; numbers use at most
    4 decimal places with trailing zeros trimmed. parse(serialize(d)) == d.
    """
    body = ", ".join(serialize_shape(s) for s in d.shapes)
    return '{"shapes": [' + body + "]}"


# ---------------------------------------------------------------------------
# Diagram diffing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldChange:
    index: int          # index in the source diagram
    field: str
    old: Any
    new: Any

    def describe(self) -> str:
        old = self.old.value if isinstance(self.old, Enum) else format_number(self.old)
        new = self.new.value if isinstance(self.new, Enum) else format_number(self.new)
        return f"shape {self.index}: {self.field} {old} -> {new}"


@dataclass(frozen=True)
class DiagramDelta:
    """Edit script turning a source diagram into a target diagram.

    Added entries carry their index in the *target* so application can
    reproduce the target ordering exactly; removed entries carry their
    index in the *source*.
    """

    added: tuple[tuple[int, Shape], ...] = ()
    removed: tuple[tuple[int, Shape], ...] = ()
    modified: tuple[FieldChange, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.modified)

    @property
    def change_count(self) -> int:
        """Number of atomic edits (one per added/removed shape or field)."""
        return len(self.added) + len(self.removed) + len(self.modified)

    def summary_lines(self) -> list[str]:
        lines = [f"add {_shape_phrase(s)} (slot {i})" for i, s in self.added]
        lines += [f"remove shape {i} ({_shape_phrase(s)})" for i, s in self.removed]
        lines += [change.describe() for change in self.modified]
        return lines


def _shape_phrase(s: Shape) -> str:
    color = s.fill_color.value
    prefix = f"{color}-filled " if s.fill_color is not NamedColor.NONE else ""
    return f"{prefix}{s.shape_type.value}"


def _greedy_match(a: tuple[Shape, ...], b: tuple[Shape, ...]) -> list[tuple[int, int]]:
    """Pair shapes of the same type greedily by center distance."""
    pairs: list[tuple[float, int, int]] = []
    for ia, sa in enumerate(a):
        for ib, sb in enumerate(b):
            if sa.shape_type is sb.shape_type:
                dist = math.hypot(sa.x - sb.x, sa.y - sb.y)
                pairs.append((dist, ia, ib))
    pairs.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matching = []
    for _, ia, ib in pairs:
        if ia in used_a or ib in used_b:
            continue
        used_a.add(ia)
        used_b.add(ib)
        matching.append((ia, ib))
    matching.sort()
    return matching


def _order_consistent(matching: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Longest subset of matches whose target indices are increasing.

    Matches dropped here get demoted to remove+add so that applying the
    delta reproduces the target order exactly.
    """
    if not matching:
        return []
    # O(n^2) longest-increasing-subsequence over b-indices; n is small.
    best_len = [1] * len(matching)
    prev = [-1] * len(matching)
    for i in range(len(matching)):
        for j in range(i):
            if matching[j][1] < matching[i][1] and best_len[j] + 1 > best_len[i]:
                best_len[i] = best_len[j] + 1
                prev[i] = j
    end = max(range(len(matching)), key=lambda i: best_len[i])
    kept = []
    while end != -1:
        kept.append(matching[end])
        end = prev[end]
    kept.reverse()
    return kept


def diff_diagrams(a: Diagram, b: Diagram) -> DiagramDelta:
    """Field-level edit script from a to b; apply_delta(a, result) == b."""
    if a.canvas != b.canvas:
        raise CanvasMismatch(
            f"canvas {a.canvas.width}x{a.canvas.height} != "
            f"{b.canvas.width}x{b.canvas.height}"
        )
    kept = _order_consistent(_greedy_match(a.shapes, b.shapes))
    matched_a = {ia for ia, _ in kept}
    matched_b = {ib for _, ib in kept}

    removed = tuple(
        (ia, shape) for ia, shape in enumerate(a.shapes) if ia not in matched_a
    )
    added = tuple(
        (ib, shape) for ib, shape in enumerate(b.shapes) if ib not in matched_b
    )
    modified = []
    for ia, ib in kept:
        sa, sb = a.shapes[ia], b.shapes[ib]
        for name in SHAPE_FIELDS:
            old, new = getattr(sa, name), getattr(sb, name)
            if old != new:
                modified.append(FieldChange(ia, name, old, new))
    return DiagramDelta(added, removed, tuple(modified))


def apply_delta(d: Diagram, delta: DiagramDelta) -> Diagram:
    """Apply an edit script: modify in place, drop removals, insert additions."""
    shapes = list(d.shapes)
    for change in delta.modified:
        if not 0 <= change.index < len(shapes):
            raise InvalidFieldValue(f"modified index {change.index} out of range")
        shapes[change.index] = replace(shapes[change.index], **{change.field: change.new})
    for index, _ in sorted(delta.removed, reverse=True):
        if not 0 <= index < len(shapes):
            raise InvalidFieldValue(f"removed index {index} out of range")
        del shapes[index]
    for index, shape in sorted(delta.added, key=lambda pair: pair[0]):
        shapes.insert(min(index, len(shapes)), shape)
    return d.replace_shapes(shapes)
