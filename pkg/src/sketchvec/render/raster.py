"""Deterministic rasterization of diagrams for model payloads and tests.

rasterize() samples shape coverage at supersampled device resolution with
hard per-pixel-center tests; box_downsample() turns that into an
anti-aliased canvas-resolution image. Identical input yields byte-identical
output on a given build — there is no randomness, no font machinery and no
platform-dependent path anywhere in the pipeline.
"""

from __future__ import annotations

import io
import math
from array import array
from dataclasses import dataclass, field

from PIL import Image

from ..grammar import COLOR_RGB, Diagram, NamedColor, Shape, ShapeType
from .backend import RenderBackendFailure, box_downsample, render_rgba
from .svg import SvgDocument, compile_svg, triangle_vertices

WHITE = (255, 255, 255, 255)


class EncodingFailure(RuntimeError):
    """PNG encode/decode failed."""


@dataclass(frozen=True)
class RasterImage:
    """Row-major RGBA pixels.

    ``diagram`` carries the source program along with renders so that
    target-aware (oracle) model backends can reason about structure instead
    of pixels; it never participates in equality.
    """

    width: int
    height: int
    pixels: bytes
    diagram: Diagram | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        expected = self.width * self.height * 4
        if len(self.pixels) != expected:
            raise ValueError(
                f"pixel buffer is {len(self.pixels)} bytes, expected {expected}"
            )

    def pixel(self, x: int, y: int) -> tuple[int, int, int, int]:
        i = (y * self.width + x) * 4
        p = self.pixels
        return (p[i], p[i + 1], p[i + 2], p[i + 3])


def _pack_color(color: NamedColor) -> float:
    if color is NamedColor.NONE:
        return -1.0
    r, g, b = COLOR_RGB[color]
    return float((r << 16) | (g << 8) | b)


_KIND = {
    ShapeType.RECTANGLE: 0.0,
    ShapeType.CIRCLE: 1.0,
    ShapeType.ELLIPSE: 2.0,
    ShapeType.TRIANGLE: 3.0,
}


def paint_half_extents(s: Shape, include_stroke: bool = True) -> tuple[float, float]:
    """Axis-aligned half extents of the rotated shape around its center."""
    hs = s.stroke_width / 2 if include_stroke else 0.0
    theta = math.radians(s.rotation)
    c, sn = abs(math.cos(theta)), abs(math.sin(theta))
    if s.shape_type is ShapeType.CIRCLE:
        r = s.scale_x / 2 + hs
        return r, r
    a, b = s.scale_x / 2 + hs, s.scale_y / 2 + hs
    if s.shape_type is ShapeType.RECTANGLE:
        return a * c + b * sn, a * sn + b * c
    if s.shape_type is ShapeType.ELLIPSE:
        return (
            math.sqrt(a * a * c * c + b * b * sn * sn),
            math.sqrt(a * a * sn * sn + b * b * c * c),
        )
    # Triangle: rotate the vertices, then pad by the stroke radius
    # (round joins never reach further than stroke_width/2 past a vertex).
    th = math.radians(s.rotation)
    ct, st = math.cos(th), math.sin(th)
    xs, ys = [], []
    for vx, vy in triangle_vertices(s):
        ux, uy = vx - s.x, vy - s.y
        xs.append(ux * ct - uy * st)
        ys.append(ux * st + uy * ct)
    return max(abs(v) for v in xs) + hs, max(abs(v) for v in ys) + hs


def _pack_shapes(d: Diagram, ss: int, dev_w: int, dev_h: int) -> tuple[array, int]:
    params = array("d")
    for s in d.shapes:
        theta = math.radians(s.rotation)
        a = s.scale_x / 2
        # scale_x wins as the circle diameter when the two scales disagree.
        b = a if s.shape_type is ShapeType.CIRCLE else s.scale_y / 2
        hw, hh = paint_half_extents(s)
        x0 = min(max(math.floor((s.x - hw) * ss), 0), dev_w)
        x1 = min(max(math.ceil((s.x + hw) * ss), 0), dev_w)
        y0 = min(max(math.floor((s.y - hh) * ss), 0), dev_h)
        y1 = min(max(math.ceil((s.y + hh) * ss), 0), dev_h)
        params.extend(
            (
                _KIND[s.shape_type],
                s.x,
                s.y,
                a,
                b,
                math.cos(theta),
                math.sin(theta),
                _pack_color(s.fill_color),
                _pack_color(s.stroke_color),
                s.stroke_width / 2,
                float(x0),
                float(y0),
                float(x1),
                float(y1),
            )
        )
    return params, len(d.shapes)


def rasterize(svg: SvgDocument, supersample: int = 1) -> RasterImage:
    """Render at canvas-times-supersample resolution over a white background."""
    if supersample < 1:
        raise ValueError(f"supersample must be >= 1, got {supersample}")
    d = svg.diagram
    if d is None:
        raise RenderBackendFailure("SvgDocument carries no diagram; use compile_svg")
    dev_w = d.canvas.width * supersample
    dev_h = d.canvas.height * supersample
    buf = bytearray(b"\xff" * (dev_w * dev_h * 4))
    params, n = _pack_shapes(d, supersample, dev_w, dev_h)
    if n:
        try:
            render_rgba(buf, dev_w, dev_h, supersample, params, n)
        except Exception as exc:  # pragma: no cover - kernel bugs only
            raise RenderBackendFailure(f"raster kernel failed: {exc}") from exc
    return RasterImage(dev_w, dev_h, bytes(buf), diagram=d)


def downsample(img: RasterImage, factor: int) -> RasterImage:
    if factor == 1:
        return img
    if img.width % factor or img.height % factor:
        raise ValueError(f"dimensions {img.width}x{img.height} not divisible by {factor}")
    out_w, out_h = img.width // factor, img.height // factor
    dst = bytearray(out_w * out_h * 4)
    box_downsample(img.pixels, img.width, img.height, factor, dst)
    return RasterImage(out_w, out_h, bytes(dst), diagram=img.diagram)


def render_image(d: Diagram, supersample: int = 2) -> RasterImage:
    """Canvas-resolution anti-aliased render; the loop's standard view."""
    return downsample(rasterize(compile_svg(d), supersample), supersample)


def encode_png(img: RasterImage) -> bytes:
    try:
        pil = Image.frombytes("RGBA", (img.width, img.height), img.pixels)
        out = io.BytesIO()
        pil.save(out, format="PNG")
        return out.getvalue()
    except Exception as exc:
        raise EncodingFailure(f"PNG encode failed: {exc}") from exc


def decode_png(data: bytes, diagram: Diagram | None = None) -> RasterImage:
    try:
        pil = Image.open(io.BytesIO(data))
        pil = pil.convert("RGBA")
        return RasterImage(pil.width, pil.height, pil.tobytes(), diagram=diagram)
    except Exception as exc:
        raise EncodingFailure(f"PNG decode failed: {exc}") from exc
