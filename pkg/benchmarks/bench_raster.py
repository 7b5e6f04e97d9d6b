"""Benchmark: compiled raster kernels versus the pure-Python fallback.

Renders a fixed 12-shape scene at several supersampling factors with every
available kernel backend and reports throughput. Run from the repo root:

    python3 benchmarks/bench_raster.py
"""

from __future__ import annotations

import time

from sketchvec import Canvas, Diagram, make_shape
from sketchvec.render import backend
from sketchvec.render import raster as raster_module
from sketchvec.render.raster import rasterize
from sketchvec.render.svg import compile_svg

CANVAS = Canvas(200, 200)


def standard_scene() -> Diagram:
    shapes = []
    for i in range(3):
        shapes.append(make_shape(
            "rectangle", x=40 + 60 * i, y=40, scale_x=44, scale_y=28,
            fill_color="blue", stroke_color="black", stroke_width=2, rotation=15 * i,
        ))
        shapes.append(make_shape(
            "circle", x=40 + 60 * i, y=100, scale_x=36, scale_y=36,
            fill_color="red", stroke_color="orange", stroke_width=3,
        ))
        shapes.append(make_shape(
            "ellipse", x=40 + 60 * i, y=150, scale_x=50, scale_y=20,
            fill_color="yellow", stroke_color="purple", stroke_width=1, rotation=30,
        ))
        shapes.append(make_shape(
            "triangle", x=40 + 60 * i, y=180, scale_x=30, scale_y=26,
            fill_color="green", stroke_color="black", stroke_width=1, rotation=120 * i,
        ))
    return Diagram(CANVAS, tuple(shapes))


def bench_backend(name: str, kernels, svg, supersample: int, budget_s: float = 2.0):
    raster_module.render_rgba = kernels.render_rgba
    raster_module.box_downsample = kernels.box_downsample
    # Warm up once, then measure as many frames as the budget allows.
    rasterize(svg, supersample)
    frames = 0
    started = time.perf_counter()
    while time.perf_counter() - started < budget_s:
        rasterize(svg, supersample)
        frames += 1
        if name == "python" and frames >= 3:
            break
    elapsed = time.perf_counter() - started
    per_frame = elapsed / frames
    pixels = (CANVAS.width * supersample) * (CANVAS.height * supersample)
    return per_frame, pixels / per_frame


def main() -> None:
    scene = standard_scene()
    svg = compile_svg(scene)
    backends = backend.kernel_backends()
    print(f"scene: {len(scene.shapes)} shapes on {CANVAS.width}x{CANVAS.height}")
    print(f"available backends: {', '.join(backends)}\n")
    print(f"{'backend':<8} {'ss':>3} {'ms/frame':>10} {'Mpx/s':>8}")
    results: dict[tuple[str, int], float] = {}
    for supersample in (1, 2, 4):
        for name, kernels in backends.items():
            per_frame, throughput = bench_backend(name, kernels, svg, supersample)
            results[(name, supersample)] = per_frame
            print(f"{name:<8} {supersample:>3} {per_frame * 1e3:>10.2f} {throughput / 1e6:>8.1f}")
    if "c" in backends and "python" in backends:
        print()
        for supersample in (1, 2, 4):
            ratio = results[("python", supersample)] / results[("c", supersample)]
            print(f"speedup at ss={supersample}: {ratio:.0f}x")
    # Restore whatever the import-time selection was.
    raster_module.render_rgba = backend.render_rgba
    raster_module.box_downsample = backend.box_downsample


if __name__ == "__main__":
    main()
