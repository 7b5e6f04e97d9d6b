"""Diagram rendering: SVG compilation and deterministic rasterization."""

from .backend import BACKEND_NAME, HAVE_COMPILED, RenderBackendFailure
from .raster import (
    EncodingFailure,
    RasterImage,
    decode_png,
    downsample,
    encode_png,
    paint_half_extents,
    rasterize,
    render_image,
)
from .svg import SvgDocument, compile_svg, triangle_vertices

__all__ = [
    "BACKEND_NAME",
    "HAVE_COMPILED",
    "RenderBackendFailure",
    "EncodingFailure",
    "RasterImage",
    "SvgDocument",
    "compile_svg",
    "decode_png",
    "downsample",
    "encode_png",
    "paint_half_extents",
    "rasterize",
    "render_image",
    "triangle_vertices",
]
