"""Compile a normalized Diagram to an SVG 1.1 document.

One SVG element per shape, in diagram order (painter's order). Rotation is
emitted as a rotate() transform about the shape center, which SVG applies
clockwise in its y-down coordinate system — the same convention the
grammar uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..grammar import Diagram, NamedColor, Shape, ShapeType, format_number

_SVG_HEADER = (
    '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
    'width="{w}" height="{h}" viewBox="0 0 {w} {h}">'
)


@dataclass(frozen=True)
class SvgDocument:
    """SVG text plus the diagram it was compiled from.

    The diagram reference lets the rasterizer work from analytic geometry
    instead of re-parsing the text; it is an internal convenience and does
    not affect the emitted document.
    """

    text: str
    diagram: Diagram = field(compare=False)


def _paint(color: NamedColor) -> str:
    return "none" if color is NamedColor.NONE else color.value


def _f(value: float) -> str:
    return format_number(value)


def triangle_vertices(s: Shape) -> list[tuple[float, float]]:
    """Unrotated isoceles vertices: apex points up at rotation 0."""
    return [
        (s.x, s.y - s.scale_y / 2),
        (s.x - s.scale_x / 2, s.y + s.scale_y / 2),
        (s.x + s.scale_x / 2, s.y + s.scale_y / 2),
    ]


def _shape_element(s: Shape) -> str:
    paint = (
        f'fill="{_paint(s.fill_color)}" stroke="{_paint(s.stroke_color)}" '
        f'stroke-width="{_f(s.stroke_width)}"'
    )
    transform = ""
    if s.rotation != 0:
        transform = f' transform="rotate({_f(s.rotation)} {_f(s.x)} {_f(s.y)})"'

    if s.shape_type is ShapeType.CIRCLE:
        # The grammar names a single shape "circle" but carries two scales;
        # scale_x wins as the diameter (see grammar.diagram_warnings).
        return (
            f'<circle cx="{_f(s.x)}" cy="{_f(s.y)}" r="{_f(s.scale_x / 2)}" '
            f"{paint}/>"
        )
    if s.shape_type is ShapeType.ELLIPSE:
        return (
            f'<ellipse cx="{_f(s.x)}" cy="{_f(s.y)}" '
            f'rx="{_f(s.scale_x / 2)}" ry="{_f(s.scale_y / 2)}" '
            f"{paint}{transform}/>"
        )
    if s.shape_type is ShapeType.RECTANGLE:
        return (
            f'<rect x="{_f(s.x - s.scale_x / 2)}" y="{_f(s.y - s.scale_y / 2)}" '
            f'width="{_f(s.scale_x)}" height="{_f(s.scale_y)}" '
            f"{paint}{transform}/>"
        )
    points = " ".join(f"{_f(px)},{_f(py)}" for px, py in triangle_vertices(s))
    return f'<polygon points="{points}" {paint}{transform}/>'


def compile_svg(d: Diagram) -> SvgDocument:
    lines = [_SVG_HEADER.format(w=d.canvas.width, h=d.canvas.height)]
    lines += [_shape_element(s) for s in d.shapes]
    lines.append("</svg>")
    return SvgDocument(text="\n".join(lines) + "\n", diagram=d)
