"""Target-aware programmatic backend for all three model roles.

The oracle knows the target diagram, so it can play critic, synthesizer and
judge deterministically: the critic derives field-level edits from the
structural matching against the target, the synthesizer applies them per
strategy, and the judge picks the candidate with the smallest structural
distance. This makes the whole loop verifiable offline, with no model in
sight.

The critic encodes its edits as JSON in ``raw_response``; the suggestion
texts stay qualitative, the way a real critic would phrase them. Only the
oracle synthesizer reads the JSON back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Sequence

from ..grammar import (
    Diagram,
    NamedColor,
    Shape,
    ShapeType,
    normalize_shape,
    parse_diagram,
    serialize_diagram,
)
from ..geometry import shape_pair_cost, structural_distance
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
from .prompts import NO_DIFFERENCES_MARKER

_GAIN_EPSILON = 1e-9

_EDITABLE_FIELDS = (
    "x",
    "y",
    "scale_x",
    "scale_y",
    "fill_color",
    "stroke_color",
    "stroke_width",
    "rotation",
)

_OP_RANK = {"remove": 0, "add": 1, "set": 2, "reshape": 3}


def region_name(x: float, y: float, width: int, height: int) -> str:
    col = "left" if x < width / 3 else ("right" if x > 2 * width / 3 else "center")
    row = "top" if y < height / 3 else ("bottom" if y > 2 * height / 3 else "middle")
    if col == "center" and row == "middle":
        return "center"
    return f"{row}-{col}"


def _phrase(s: Shape) -> str:
    fill = (
        f"{s.fill_color.value}-filled "
        if s.fill_color is not NamedColor.NONE
        else "unfilled "
    )
    return f"{fill}{s.shape_type.value}"


@dataclass(frozen=True)
class OracleEdit:
    op: str                      # set | add | remove | reshape
    index: int                   # current-program index (add: target slot)
    gain: float
    field: str | None = None
    value: Any = None            # JSON-ready
    shape: dict | None = None    # for add
    fields: dict | None = None   # for reshape
    problem: str = ""
    suggestion: str = ""

    def to_payload(self) -> dict:
        payload: dict[str, Any] = {"op": self.op, "index": self.index}
        if self.field is not None:
            payload["field"] = self.field
            payload["value"] = self.value
        if self.shape is not None:
            payload["shape"] = self.shape
        if self.fields is not None:
            payload["fields"] = self.fields
        return payload


def _json_value(value: Any) -> Any:
    if isinstance(value, (NamedColor, ShapeType)):
        return value.value
    return value


def _direction(old: float, new: float, axis: str) -> str:
    if axis == "x":
        return "right" if new > old else "left"
    return "down" if new > old else "up"


def _describe_set(current: Shape, edit_field: str, new_value: Any,
                  width: int, height: int) -> tuple[str, str]:
    phrase = _phrase(current)
    old_value = getattr(current, edit_field)
    if edit_field in ("x", "y"):
        target_x = new_value if edit_field == "x" else current.x
        target_y = new_value if edit_field == "y" else current.y
        region = region_name(target_x, target_y, width, height)
        direction = _direction(old_value, new_value, edit_field)
        return (
            f"The {phrase} sits too far {_opposite(direction)}.",
            f"Move the {phrase} {direction}, toward the {region} of the canvas.",
        )
    if edit_field in ("scale_x", "scale_y"):
        axis = "wider" if edit_field == "scale_x" else "taller"
        inverse = "narrower" if edit_field == "scale_x" else "shorter"
        word = axis if new_value > old_value else inverse
        return (
            f"The {phrase} has the wrong "
            f"{'width' if edit_field == 'scale_x' else 'height'}.",
            f"Make the {phrase} {word}, roughly "
            f"{_ratio_phrase(old_value, new_value)} its current size.",
        )
    if edit_field in ("fill_color", "stroke_color"):
        what = "fill" if edit_field == "fill_color" else "outline"
        return (
            f"The {phrase} has the wrong {what} color.",
            f"Change the {what} of the {phrase} to {new_value}.",
        )
    if edit_field == "rotation":
        delta = (float(new_value) - current.rotation) % 360.0
        if delta > 180.0:
            turn, amount = "counterclockwise", 360.0 - delta
        else:
            turn, amount = "clockwise", delta
        return (
            f"The {phrase} is tilted wrongly.",
            f"Rotate the {phrase} {turn} by about {round(amount)} degrees.",
        )
    thicker = float(new_value) > current.stroke_width
    return (
        f"The outline weight of the {phrase} looks off.",
        f"Make the outline of the {phrase} {'heavier' if thicker else 'lighter'}.",
    )


def _opposite(direction: str) -> str:
    return {"left": "right", "right": "left", "up": "down", "down": "up"}[direction]


def _ratio_phrase(old: float, new: float) -> str:
    if old <= 0:
        return "twice"
    ratio = new / old
    if ratio >= 1.75:
        return "twice"
    if ratio >= 1.2:
        return "one and a half times"
    if ratio > 1.0:
        return "slightly larger than"
    if ratio > 0.8:
        return "slightly smaller than"
    if ratio > 0.6:
        return "three quarters of"
    return "half"


class OracleGateway(ModelGateway):
    """Critic, synthesizer and judge derived from a known target diagram."""

    def __init__(self, target: Diagram):
        self.target = target

    # -- critic ------------------------------------------------------------

    def describe_initial(self, sketch: RasterImage, instruction: str) -> CritiqueReport:
        initial = self.coarse_initial_program()
        lines = ["The sketch shows the following primitives:"]
        width, height = self.target.canvas.width, self.target.canvas.height
        for s in self.target.shapes:
            lines.append(
                f"- a {_phrase(s)} with {s.stroke_color.value} outline in the "
                f"{region_name(s.x, s.y, width, height)}, roughly "
                f"{round(s.scale_x)} by {round(s.scale_y)} pixels"
            )
        raw = json.dumps({"initial_program": serialize_diagram(initial)})
        return CritiqueReport(
            scene_description="\n".join(lines),
            discrepancies=(),
            suggestions=(),
            raw_response=raw,
        )

    def critique(
        self,
        sketch: RasterImage,
        current: RasterImage,
        instruction: str,
        failures: Sequence[FailureFeedback] = (),
    ) -> CritiqueReport:
        current_diagram = self._diagram_of(current, "critique current image")
        distance = structural_distance(current_diagram, self.target).value
        edits = self.ranked_edits(current_diagram) if distance > 0 else []
        if not edits:
            return CritiqueReport(
                scene_description=(
                    "The rendered diagram matches the sketch. "
                    + NO_DIFFERENCES_MARKER
                ),
                raw_response=json.dumps({"edits": [], "distance": distance}),
            )
        chosen = edits[:3]
        raw = json.dumps(
            {
                "edits": [e.to_payload() for e in chosen],
                "remaining_edits": len(edits),
                "distance": distance,
            }
        )
        return CritiqueReport(
            scene_description=self._scene_description(),
            discrepancies=tuple(e.problem for e in chosen),
            suggestions=tuple(e.suggestion for e in chosen),
            raw_response=raw,
        )

    def _scene_description(self) -> str:
        width, height = self.target.canvas.width, self.target.canvas.height
        parts = [
            f"{_phrase(s)} in the {region_name(s.x, s.y, width, height)}"
            for s in self.target.shapes
        ]
        return "The sketch shows " + ("; ".join(parts) if parts else "an empty canvas") + "."

    # -- synthesizer ---------------------------------------------------------

    def synthesize(
        self,
        current_program: Diagram,
        critique: CritiqueReport,
        strategy: Strategy,
        grammar_text: str,
    ) -> CandidateProgram:
        try:
            payload = json.loads(critique.raw_response)
        except (TypeError, json.JSONDecodeError) as exc:
            raise GatewayError(f"oracle critique payload unreadable: {exc}") from exc

        if "initial_program" in payload:
            diagram = parse_diagram(payload["initial_program"], current_program.canvas)
            return CandidateProgram(
                strategy=strategy,
                diagram=diagram,
                raw_response=serialize_diagram(diagram),
            )

        edits = [payload_edit for payload_edit in payload.get("edits", [])]
        selected = self._select_edits(edits, strategy)
        diagram = self._apply_edits(current_program, selected)
        if strategy is Strategy.ALTERNATIVE and len(diagram.shapes) >= 2:
            shapes = diagram.shapes
            diagram = diagram.replace_shapes(shapes[1:] + shapes[:1])
        # Round-trip through the grammar so every candidate is validated.
        diagram = parse_diagram(serialize_diagram(diagram), current_program.canvas)
        return CandidateProgram(
            strategy=strategy,
            diagram=diagram,
            raw_response=serialize_diagram(diagram),
        )

    def _select_edits(self, edits: list[dict], strategy: Strategy) -> list[dict]:
        if not edits:
            return []
        if strategy is Strategy.CONSERVATIVE:
            return edits[:1]
        if strategy is Strategy.MODERATE:
            return edits[: math.ceil(len(edits) / 2)]
        if strategy is Strategy.FOCUSED:
            # All edits touching the single most-discrepant region, i.e. the
            # subject of the first (highest-gain) edit.
            lead = edits[0]
            key = (lead["op"] == "add", lead["index"])
            return [e for e in edits if (e["op"] == "add", e["index"]) == key]
        return list(edits)  # aggressive and alternative apply everything

    def _apply_edits(self, d: Diagram, edits: list[dict]) -> Diagram:
        shapes = list(d.shapes)
        sets = [e for e in edits if e["op"] in ("set", "reshape")]
        removes = [e for e in edits if e["op"] == "remove"]
        adds = [e for e in edits if e["op"] == "add"]
        for e in sets:
            idx = e["index"]
            if not 0 <= idx < len(shapes):
                continue
            record = shapes[idx].to_record()
            if e["op"] == "set":
                record[e["field"]] = e["value"]
            else:
                record.update(e["fields"])
            shapes[idx] = normalize_shape(record)
        for e in sorted(removes, key=lambda e: e["index"], reverse=True):
            idx = e["index"]
            if 0 <= idx < len(shapes):
                del shapes[idx]
        for e in sorted(adds, key=lambda e: e["index"]):
            shapes.insert(min(e["index"], len(shapes)), normalize_shape(e["shape"]))
        return d.replace_shapes(shapes)

    # -- judge ---------------------------------------------------------------

    def judge(
        self,
        sketch: RasterImage,
        current: RasterImage,
        candidates: Sequence[RasterImage],
    ) -> JudgeVerdict:
        if not candidates:
            raise GatewayError("judge requires at least one candidate")
        current_diagram = self._diagram_of(current, "judge current image")
        current_distance = structural_distance(current_diagram, self.target).value
        distances = [
            structural_distance(self._diagram_of(img, f"candidate {i + 1}"), self.target).value
            for i, img in enumerate(candidates)
        ]
        best_index = min(range(len(distances)), key=lambda i: (distances[i], i))
        if distances[best_index] < current_distance:
            selected = best_index + 1
            rationale = (
                f"candidate {selected} reduces structural distance "
                f"{current_distance:.4f} -> {distances[best_index]:.4f}"
            )
        else:
            selected = 0
            rationale = (
                f"no candidate improves on the current distance "
                f"{current_distance:.4f}; keeping the current diagram"
            )
        raw = json.dumps({"selected": selected, "distances": distances})
        return JudgeVerdict(selected=selected, rationale=rationale, raw_response=raw)

    # -- oracle internals ------------------------------------------------------

    def _diagram_of(self, img: RasterImage, what: str) -> Diagram:
        if img.diagram is None:
            raise GatewayError(
                f"oracle backend needs diagram-tagged renders ({what} has none)"
            )
        return img.diagram

    def coarse_initial_program(self) -> Diagram:
        """A deliberately rough first take on the target.

        Positions snap to an eighth-of-canvas grid, sizes to a sixteenth,
        rotations to the nearest quarter turn; colors and stroke weights are
        trusted. This mimics what a competent scene description yields and
        leaves the loop real refinement work to do.
        """
        canvas = self.target.canvas
        pos_x = canvas.width / 8
        pos_y = canvas.height / 8
        size_unit = max(canvas.width, canvas.height) / 16
        coarse = []
        for s in self.target.shapes:
            scale_x = max(round(s.scale_x / size_unit), 1) * size_unit
            scale_y = max(round(s.scale_y / size_unit), 1) * size_unit
            if s.shape_type is ShapeType.CIRCLE:
                scale_y = scale_x
            coarse.append(
                replace(
                    s,
                    x=round(round(s.x / pos_x) * pos_x, 4),
                    y=round(round(s.y / pos_y) * pos_y, 4),
                    scale_x=round(scale_x, 4),
                    scale_y=round(scale_y, 4),
                    rotation=(round(s.rotation / 90.0) * 90.0) % 360.0,
                )
            )
        return self.target.replace_shapes(coarse)

    def ranked_edits(self, current: Diagram) -> list[OracleEdit]:
        """All strictly distance-reducing edits, best gain first."""
        canvas = self.target.canvas
        width, height = canvas.width, canvas.height
        sd = structural_distance(current, self.target)
        matched_current = {ia for ia, _ in sd.matching}
        matched_target = {ib for _, ib in sd.matching}
        edits: list[OracleEdit] = []

        for ia, ib in sd.matching:
            sa, sb = current.shapes[ia], self.target.shapes[ib]
            base = shape_pair_cost(sa, sb, canvas)
            if base <= _GAIN_EPSILON:
                continue
            singles = []
            diff_values: dict[str, Any] = {}
            for name in _EDITABLE_FIELDS:
                old, new = getattr(sa, name), getattr(sb, name)
                if old == new:
                    continue
                diff_values[name] = new
                gain = base - shape_pair_cost(replace(sa, **{name: new}), sb, canvas)
                if gain > _GAIN_EPSILON:
                    problem, suggestion = _describe_set(
                        sa, name, _json_value(new), width, height
                    )
                    singles.append(
                        OracleEdit(
                            op="set",
                            index=ia,
                            gain=gain,
                            field=name,
                            value=_json_value(new),
                            problem=problem,
                            suggestion=suggestion,
                        )
                    )
            edits.extend(singles)
            # Fields that only help in combination (antagonistic size and
            # rotation changes) ride in one composite edit; without it the
            # loop would stall on shapes where no single field improves.
            residual = {
                name: value
                for name, value in diff_values.items()
                if name not in {e.field for e in singles}
            }
            if residual:
                residual_gain = base - shape_pair_cost(
                    replace(sa, **residual), sb, canvas
                )
                if residual_gain <= _GAIN_EPSILON:
                    residual = dict(diff_values)
                    residual_gain = base
                edits.append(
                    OracleEdit(
                        op="reshape",
                        index=ia,
                        gain=residual_gain,
                        fields={k: _json_value(v) for k, v in residual.items()},
                        problem=f"The {_phrase(sa)} has the wrong proportions.",
                        suggestion=(
                            f"Reshape the {_phrase(sa)} (size and rotation "
                            f"together) to match the sketch."
                        ),
                    )
                )

        for ia, sa in enumerate(current.shapes):
            if ia not in matched_current:
                edits.append(
                    OracleEdit(
                        op="remove",
                        index=ia,
                        gain=1.0,
                        problem=f"There is an extra {_phrase(sa)} that the sketch does not show.",
                        suggestion=f"Remove the extra {_phrase(sa)}.",
                    )
                )
        for ib, sb in enumerate(self.target.shapes):
            if ib not in matched_target:
                region = region_name(sb.x, sb.y, width, height)
                edits.append(
                    OracleEdit(
                        op="add",
                        index=ib,
                        gain=1.0,
                        shape=sb.to_record(),
                        problem=f"A {_phrase(sb)} is missing near the {region}.",
                        suggestion=(
                            f"Add a {_phrase(sb)} in the {region} of the canvas, "
                            f"roughly {round(sb.scale_x)} by {round(sb.scale_y)} pixels."
                        ),
                    )
                )

        edits.sort(
            key=lambda e: (-e.gain, _OP_RANK[e.op], e.index, e.field or "")
        )
        return edits
