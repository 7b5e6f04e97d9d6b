"""Raster kernel backend selection.

Prefers the compiled extension when it imported cleanly, otherwise falls
back to the pure-Python twin. SKETCHVEC_RASTER_BACKEND=python|c forces a
specific backend (``c`` raises if the extension is unavailable).
"""

from __future__ import annotations

import os

from . import _kernels_py


class RenderBackendFailure(RuntimeError):
    """The rasterizer could not produce an image."""


try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None

_forced = os.environ.get("SKETCHVEC_RASTER_BACKEND", "").strip().lower()
if _forced == "python":
    _active = _kernels_py
elif _forced == "c":
    if _compiled is None:
        raise RenderBackendFailure(
            "SKETCHVEC_RASTER_BACKEND=c but the compiled kernels are not built; "
            "run `python setup.py build_ext --inplace` or reinstall"
        )
    _active = _compiled
else:
    _active = _compiled if _compiled is not None else _kernels_py

BACKEND_NAME = "c" if _active is _compiled else "python"
HAVE_COMPILED = _compiled is not None

render_rgba = _active.render_rgba
box_downsample = _active.box_downsample


def kernel_backends() -> dict[str, object]:
    """All importable kernel modules, keyed by name (for the benchmark)."""
    backends: dict[str, object] = {"python": _kernels_py}
    if _compiled is not None:
        backends["c"] = _compiled
    return backends
